# -*- coding: utf-8 -*-
"""
==================================
Manufactured-solution convergence
==================================

Measures the discretization orders of the coupled solver against a
manufactured solution: the spatial error on a ladder of uniformly
refined meshes, and the time-stepping error on a ladder of halved step
sizes.  Prints the same tables the verification suite condenses into
pass/fail checks (``hotpress verify mms``).
"""

import numpy as np

from hotpress.verification import mms_spatial_study, mms_temporal_study

################################################################################
# spatial order: steady manufactured state on 5x5 ... 40x40 meshes
#
# the streamline stabilization is switched off here: its convective-only
# defect decays one order slower than the element truncation and would
# mask the order being measured (the supg demo covers what it is for)

n_values = (5, 10, 20, 40)
errors, orders = mms_spatial_study(n_values, stabilization=False)

print("spatial refinement (volume-weighted RMS error of the scaled state):")
print("   mesh      error     observed order")
for i, n in enumerate(n_values):
    tail = f"{orders[i - 1]:.3f}" if i else "  -  "
    print(f"  {n:3d}x{n:<3d}  {errors[i]:.4e}     {tail}")
slope = -np.polyfit(np.log2(n_values), np.log2(errors), 1)[0]
print(f"least-squares slope: {slope:.3f}  (second-order elements)")

################################################################################
# temporal order: one 8x8 mesh, dt halved; successive differences cancel
# the fixed spatial error so the pure time-stepping order shows

dts = (1.0, 0.5, 0.25, 0.125, 0.0625)
diffs, t_orders = mms_temporal_study(dts)

print("\ntemporal refinement (successive-difference errors):")
print("    dt        difference   observed order")
for i, dt in enumerate(dts[:-1]):
    tail = f"{t_orders[i - 1]:.3f}" if i else "  -  "
    print(f"  {dt:7.4f}   {diffs[i]:.4e}      {tail}")
print(f"mean pairwise order: {np.mean(t_orders):.3f}  "
      "(backward Euler: first order)")
