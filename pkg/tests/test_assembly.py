"""Tests for the derived thermodynamic state and the assembled residual."""

import numpy as np
import pytest

from hotpress import assembly as asm
from hotpress import mesh as hm
from hotpress import properties as props
from hotpress.errors import StepError
from hotpress.properties import MaterialParams

AMBIENT = (30.0, 65.0, 101325.0)


@pytest.fixture(scope="module")
def params():
    return MaterialParams(rho_s=586.0)


@pytest.fixture(scope="module")
def small_mesh():
    return hm.build_graded_mesh(0.2828, 0.0075, 6, 8, 4.0)


@pytest.fixture()
def open_system(small_mesh, params):
    return asm.PressSystem(small_mesh, params, lambda t: 30.0, AMBIENT)


class TestStateVector:
    def test_pack_unpack_roundtrip(self):
        t = np.array([30.0, 40.0])
        h = np.array([11.0, 9.0])
        a = np.array([1.0, 0.5])
        u = asm.pack_state(t, h, a)
        assert u.shape == (6,)
        tt, hh, aa = asm.state_fields(u)
        assert np.array_equal(tt, t) and np.array_equal(hh, h) and np.array_equal(aa, a)

    def test_interleaving_order(self):
        u = asm.pack_state([1.0, 4.0], [2.0, 5.0], [3.0, 6.0])
        assert u.tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]

    def test_validate_rejects_negative_moisture(self):
        u = asm.pack_state([30.0], [-0.5], [1.0])
        with pytest.raises(StepError):
            asm.validate_state(u)

    def test_validate_rejects_nan(self):
        u = asm.pack_state([30.0], [np.nan], [1.0])
        with pytest.raises(StepError):
            asm.validate_state(u)

    def test_validate_accepts_tiny_undershoot(self):
        u = asm.pack_state([30.0], [-1e-12], [1.0])
        asm.validate_state(u)  # within tolerance

    def test_validate_air_tolerance_is_strict_by_default(self):
        u = asm.pack_state([30.0], [11.0], [-0.03])
        with pytest.raises(StepError):
            asm.validate_state(u)

    def test_validate_air_tolerance_bounds_the_rim_dip(self):
        dip = asm.pack_state([30.0], [11.0], [-0.03])
        asm.validate_state(dip, a_tol=0.05)  # bounded layer undershoot
        runaway = asm.pack_state([30.0], [11.0], [-0.3])
        with pytest.raises(StepError):
            asm.validate_state(runaway, a_tol=0.05)


class TestDerivedState:
    def test_chained_reference_state(self, params):
        """T=30, H=11 (the calibration anchor), near-vacuum air."""
        th = asm.derive_thermo(30.0, 11.0, 1e-6, params)
        psat = props.saturated_vapor_pressure(30.0)
        assert th.hr == pytest.approx(65.0, abs=1e-9)
        assert th.p_vapor == pytest.approx(0.65 * psat, rel=1e-12)
        assert th.rho_v == pytest.approx(6.0e-8 * psat * 65.0, rel=1e-12)
        # ideal gas: P_a = rho_a R T / mm
        assert th.p_air == pytest.approx(1e-6 * 8314.0 * 303.15 / 28.96, rel=1e-12)
        assert th.p_total == pytest.approx(th.p_air + th.p_vapor, rel=1e-12)

    def test_dry_vacuum_state_evaluable(self, params):
        th = asm.derive_thermo(25.0, 0.0, 0.0, params)
        assert th.hr == 0.0
        assert th.rho_v == 0.0
        assert th.p_total == 0.0
        assert np.isfinite(th.diffusivity) and th.diffusivity > 0.0

    def test_moisture_clamped_for_constitutive_laws(self, params):
        th_neg = asm.derive_thermo(50.0, -1e-8, 0.5, params)
        th_zero = asm.derive_thermo(50.0, 0.0, 0.5, params)
        assert th_neg.hr == th_zero.hr
        assert th_neg.sorption == th_zero.sorption

    def test_porosity_comes_from_params(self, params):
        th = asm.derive_thermo(30.0, 11.0, 1.0, params)
        assert th.epsilon == pytest.approx(params.porosity_value(), rel=1e-14)

    def test_vectorized_matches_scalar(self, params):
        t = np.array([30.0, 80.0, 140.0])
        h = np.array([11.0, 6.0, 2.0])
        a = np.array([1e-6, 0.4, 1.1])
        th = asm.derive_thermo(t, h, a, params)
        for i in range(3):
            ths = asm.derive_thermo(t[i], h[i], a[i], params)
            assert th.p_total[i] == pytest.approx(ths.p_total, rel=1e-13)
            assert th.rho_v[i] == pytest.approx(ths.rho_v, rel=1e-13)
            assert th.cp[i] == pytest.approx(ths.cp, rel=1e-13)


class TestVaporDensityPartials:
    def test_signs(self, params):
        dt, dh = asm.vapor_density_partials(80.0, 8.0, params)
        assert dt > 0.0, "vapor density must rise with temperature"
        assert dh > 0.0, "vapor density must rise with moisture below saturation"

    def test_matches_coarse_difference(self, params):
        t0, h0 = 70.0, 9.0
        dt_fine, dh_fine = asm.vapor_density_partials(t0, h0, params)
        step = 1e-4
        dt_coarse = (
            asm.vapor_density_map(t0 + step, h0, params)
            - asm.vapor_density_map(t0 - step, h0, params)
        ) / (2 * step)
        dh_coarse = (
            asm.vapor_density_map(t0, h0 + step, params)
            - asm.vapor_density_map(t0, h0 - step, params)
        ) / (2 * step)
        assert dt_fine == pytest.approx(dt_coarse, rel=1e-5)
        assert dh_fine == pytest.approx(dh_coarse, rel=1e-5)


class TestDarcyVelocity:
    def test_antiparallel_to_gradient(self):
        v = asm.darcy_velocity(np.array([1.0e5, -2.0e5]), 5.9e-13, 1.0e-14, 2.0e-5)
        assert v[0] < 0.0 and v[1] > 0.0

    def test_anisotropy_ratio(self):
        grad = np.array([1.0e4, 1.0e4])
        v = asm.darcy_velocity(grad, 59.0e-14, 1.0e-14, 1.8e-5)
        assert v[0] / v[1] == pytest.approx(59.0, rel=1e-12)

    def test_magnitude(self):
        # V = K/mu * |grad P|
        v = asm.darcy_velocity(np.array([0.0, 1.0e5]), 5.9e-13, 1.0e-14, 2.0e-5)
        assert v[1] == pytest.approx(-1.0e-14 / 2.0e-5 * 1.0e5, rel=1e-12)


class TestTauSupg:
    def test_diffusive_limit(self):
        h, kappa = 0.01, 1.0
        tau = asm.tau_supg(1e-9, h, kappa)
        assert tau == pytest.approx(h**2 / (12.0 * kappa), rel=1e-6)

    def test_advective_limit(self):
        a, h = 10.0, 0.01
        tau = asm.tau_supg(a, h, 1e-9)
        assert tau == pytest.approx(h / (2.0 * a), rel=1e-6)

    def test_continuous_across_series_switch(self):
        # Peclet just below / above the series cutover at matched h, kappa
        below = asm.tau_supg(2.0 * 0.99e-4, 1.0, 1.0)
        above = asm.tau_supg(2.0 * 1.01e-4, 1.0, 1.0)
        assert below == pytest.approx(above, rel=1e-6)


class TestBoundaryTargets:
    def test_rim_moisture_matches_calibration(self, open_system):
        # ambient 30 degC / 65 % and rim at 30 degC -> EMC anchor
        assert open_system.rim_moisture_bc(30.0) == pytest.approx(11.0, abs=1e-9)

    def test_rim_moisture_drops_when_hot(self, open_system):
        assert open_system.rim_moisture_bc(160.0) < 1.0

    def test_rim_air_ideal_gas(self, open_system):
        p_a = 101325.0 - 0.65 * props.saturated_vapor_pressure(30.0)
        expect = p_a * 28.96 / (8314.0 * 303.15)
        assert open_system.rim_air_bc(30.0) == pytest.approx(expect, rel=1e-12)

    def test_constrained_sets(self, small_mesh, params):
        sys_open = asm.PressSystem(small_mesh, params, lambda t: 30.0, AMBIENT)
        sys_sealed = asm.PressSystem(
            small_mesh, params, lambda t: 30.0, AMBIENT, sealed_radius=True
        )
        n_platen = len(small_mesh.node_tags[hm.PLATEN])
        n_rim = len(small_mesh.node_tags[hm.EXTERNAL])
        assert len(sys_open.constrained_dofs()) == n_platen + 2 * n_rim
        assert len(sys_sealed.constrained_dofs()) == n_platen

    def test_apply_dirichlet_assigns_targets(self, open_system):
        n = open_system.mesh.n_nodes
        u = asm.pack_state(np.full(n, 50.0), np.full(n, 9.0), np.full(n, 0.7))
        open_system.apply_dirichlet(u, 0.0)
        assert np.allclose(u[open_system.platen_tdofs], 30.0)
        t_rim = u[open_system.rim_tdofs]
        assert np.allclose(u[open_system.rim_hdofs],
                           open_system.rim_moisture_bc(t_rim))


class TestResidual:
    def equilibrium_state(self, system):
        n = system.mesh.n_nodes
        return asm.pack_state(
            np.full(n, 30.0), np.full(n, 11.0),
            np.full(n, system.rim_air_bc(30.0)),
        )

    def test_equilibrium_annihilation(self, open_system):
        u = self.equilibrium_state(open_system)
        r = open_system.residual(u, np.zeros_like(u), 0.0)
        assert np.abs(r).max() < 1e-12, (
            f"equilibrium residual {np.abs(r).max():.2e} should vanish"
        )

    def test_equilibrium_rates_vanish(self, open_system):
        u = self.equilibrium_state(open_system)
        rates = open_system.ode_rates(u, 0.0)
        assert np.abs(rates).max() < 1e-9

    def test_constraint_rows_replaced(self, open_system):
        u = self.equilibrium_state(open_system)
        u[open_system.platen_tdofs[0]] = 45.0  # violate the platen value
        r = open_system.residual(u, np.zeros_like(u), 0.0)
        assert r[open_system.platen_tdofs[0]] == pytest.approx(15.0, rel=1e-12)

    def test_mass_term_enters_residual(self, open_system):
        u = self.equilibrium_state(open_system)
        dudt = np.zeros_like(u)
        free_t = 3 * open_system.mesh.node_index(2, 2) + asm.IDX_T
        dudt[free_t] = 1.0  # 1 K/s at one interior node
        r = open_system.residual(u, dudt, 0.0)
        assert r[free_t] > 0.0

    def test_radial_uniformity_preserved(self, params):
        """Sealed run from an r-uniform state: rates must not depend on r."""
        m = hm.build_graded_mesh(0.2828, 0.0075, 6, 10, 4.0)
        system = asm.PressSystem(m, params, lambda t: 160.0, AMBIENT,
                                 sealed_radius=True)
        z = m.nodes[:, 1]
        u = asm.pack_state(
            30.0 + 100.0 * (z / 0.0075) ** 2,
            11.0 - 3.0 * (z / 0.0075),
            1e-3 * (1.0 + 0.5 * z / 0.0075),
        )
        rates = system.ode_rates(u, 0.0).reshape(m.n_nodes, 3)
        for iz in range(m.n_z + 1):
            line = m.structured_line(iz=iz)
            for c in range(3):
                vals = rates[line, c]
                ref = max(abs(vals[0]), 1e-30)
                assert np.abs(vals - vals[0]).max() / ref < 1e-10, (
                    f"row iz={iz} component {c} rates vary radially"
                )

    def test_platen_heating_warms_adjacent_nodes(self, small_mesh, params):
        system = asm.PressSystem(small_mesh, params, lambda t: 160.0, AMBIENT)
        n = small_mesh.n_nodes
        u = asm.pack_state(np.full(n, 30.0), np.full(n, 11.0), np.full(n, 1e-6))
        system.apply_dirichlet(u, 0.0)
        rates = system.ode_rates(u, 0.0).reshape(n, 3)
        inner = small_mesh.structured_line(iz=small_mesh.n_z - 1)[:-1]
        assert np.all(rates[inner, asm.IDX_T] > 0.0)

    def test_constrained_rates_zero(self, open_system):
        u = self.equilibrium_state(open_system)
        u[asm.IDX_T::3] += np.linspace(0, 5, open_system.mesh.n_nodes)
        rates = open_system.ode_rates(u, 0.0)
        assert np.all(rates[open_system.constrained_dofs()] == 0.0)


class TestFrozenLinearity:
    def test_residual_affine_in_state(self, small_mesh, params):
        system = asm.PressSystem(small_mesh, params, lambda t: 160.0, AMBIENT)
        rng = np.random.default_rng(7)
        n = small_mesh.n_nodes
        u0 = asm.pack_state(
            30.0 + 40.0 * rng.random(n),
            5.0 + 6.0 * rng.random(n),
            0.2 + 0.8 * rng.random(n),
        )
        system.freeze_state(u0)
        du = rng.standard_normal(u0.size)
        dudt = 0.1 * rng.standard_normal(u0.size)

        def r_at(s):
            return system.residual(u0 + s * du, dudt, 5.0)

        curvature = r_at(2.0) - 2.0 * r_at(1.0) + r_at(0.0)
        scale = np.abs(r_at(1.0)).max()
        assert np.abs(curvature).max() < 1e-10 * scale, (
            "frozen-coefficient residual must be affine in the state"
        )
        system.freeze_state(None)

    def test_freeze_none_restores_nonlinearity(self, small_mesh, params):
        system = asm.PressSystem(small_mesh, params, lambda t: 160.0, AMBIENT)
        n = small_mesh.n_nodes
        u0 = asm.pack_state(np.full(n, 60.0), np.full(n, 8.0), np.full(n, 0.5))
        system.freeze_state(u0)
        system.freeze_state(None)
        du = np.ones(u0.size)
        r0 = system.residual(u0, np.zeros_like(u0), 0.0)
        r1 = system.residual(u0 + du, np.zeros_like(u0), 0.0)
        r2 = system.residual(u0 + 2 * du, np.zeros_like(u0), 0.0)
        assert np.abs(r2 - 2 * r1 + r0).max() > 0.0


class TestWaterBookkeeping:
    def test_lumped_water_uniform_slab(self, small_mesh, params):
        system = asm.PressSystem(small_mesh, params, lambda t: 30.0, AMBIENT)
        n = small_mesh.n_nodes
        u = asm.pack_state(np.full(n, 30.0), np.full(n, 10.0), np.full(n, 1.0))
        # integral of rho_s * (H/100) * r over the section = rho_s*0.1*R^2/2*thk
        expect = 586.0 * 0.1 * 0.2828**2 / 2.0 * 0.0075
        assert system.lumped_water(u) == pytest.approx(expect, rel=1e-12)

    def test_balance_identity_for_no_change(self, open_system):
        n = open_system.mesh.n_nodes
        u = asm.pack_state(np.full(n, 30.0), np.full(n, 11.0),
                           np.full(n, open_system.rim_air_bc(30.0)))
        storage, influx = open_system.water_balance(u, u, 1.0, 1.0)
        assert storage == pytest.approx(0.0, abs=1e-14)
        assert influx == pytest.approx(0.0, abs=1e-14)


class TestStableDtAdvisory:
    def test_positive_and_small(self, open_system):
        dt = open_system.stable_dt_advisory()
        assert 0.0 < dt < 1.0
