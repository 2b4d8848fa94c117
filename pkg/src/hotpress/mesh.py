"""Structured quadrilateral mesh of the axisymmetric board cross-section.

The computational domain is the (r, z) rectangle [0, r_ext] x
[0, half_thickness]: r = 0 is the board axis, z = 0 the mid-thickness
symmetry plane, z = half_thickness the heated platen face and r = r_ext the
open rim.  Element sizes shrink geometrically toward the platen and the rim,
where the steep fronts live.

Nodes are numbered row-major over z-rows (index iz * (n_r + 1) + ir);
element corner connectivity is counter-clockwise starting at the low-r,
low-z corner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MeshError

# boundary tags
PLATEN = "platen"
CENTERLINE = "centerline"
MIDPLANE = "midplane"
EXTERNAL = "external_radius"

# element-local edges as (first local node, second local node), CCW
_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))


def graded_spacing(length, n, ratio):
    """Coordinates of ``n + 1`` points on [0, length], geometrically graded.

    Successive cell widths shrink by ``ratio**(1/(n-1))`` so the last cell is
    ``ratio`` times narrower than the first.  ``ratio = 1`` gives a uniform
    spacing; ``ratio > 1`` concentrates points near ``length``.
    """
    if n < 1:
        raise MeshError("need at least one element per direction")
    if ratio <= 0.0:
        raise MeshError("grading ratio must be positive")
    if n == 1 or ratio == 1.0:
        return np.linspace(0.0, length, n + 1)
    q = ratio ** (-1.0 / (n - 1))
    widths = q ** np.arange(n)
    widths *= length / widths.sum()
    return np.concatenate(([0.0], np.cumsum(widths)))


@dataclass
class Mesh:
    """Structured axisymmetric quad mesh with boundary tagging.

    Attributes
    ----------
    nodes : (n_nodes, 2) float array
        (r, z) coordinates.
    elements : (n_elems, 4) int array
        CCW corner node indices.
    boundary_edges : list of (elem, local_edge, tag)
        Every mesh edge lying on the domain boundary, with its owning
        element and tag.
    node_tags : dict tag -> int array
        Node indices on each boundary (corner nodes appear under both tags).
    """

    nodes: np.ndarray
    elements: np.ndarray
    n_r: int
    n_z: int
    boundary_edges: list = field(default_factory=list)
    node_tags: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elems(self):
        return self.elements.shape[0]

    def node_index(self, ir, iz):
        return iz * (self.n_r + 1) + ir

    def structured_line(self, *, ir=None, iz=None):
        """Node indices along one mesh line (fixed ir or fixed iz)."""
        if (ir is None) == (iz is None):
            raise MeshError("give exactly one of ir, iz")
        if ir is not None:
            return np.array([self.node_index(ir, k) for k in range(self.n_z + 1)])
        return np.array([self.node_index(k, iz) for k in range(self.n_r + 1)])


def build_graded_mesh(r_ext, half_thickness, n_r, n_z, grading_ratio=4.0):
    """Build the press cross-section mesh.

    Parameters
    ----------
    r_ext : float
        Outer board radius [m], > 0.
    half_thickness : float
        Half the board thickness [m], > 0; the platen sits at z = this value.
    n_r, n_z : int
        Element counts; >= 1 each.
    grading_ratio : float
        First-to-last cell width ratio per direction (grading toward the
        rim in r and toward the platen in z).

    Returns
    -------
    Mesh
    """
    if r_ext <= 0.0 or half_thickness <= 0.0:
        raise MeshError("domain extents must be positive")
    r = graded_spacing(r_ext, n_r, grading_ratio)
    z = graded_spacing(half_thickness, n_z, grading_ratio)
    # exact extents regardless of accumulated rounding
    r[0], r[-1] = 0.0, r_ext
    z[0], z[-1] = 0.0, half_thickness

    rr, zz = np.meshgrid(r, z)  # zz varies along axis 0 (rows)
    nodes = np.column_stack([rr.ravel(), zz.ravel()])

    elems = []
    for iz in range(n_z):
        for ir in range(n_r):
            n0 = iz * (n_r + 1) + ir
            elems.append([n0, n0 + 1, n0 + n_r + 2, n0 + n_r + 1])
    elements = np.array(elems, dtype=int)

    mesh = Mesh(nodes=nodes, elements=elements, n_r=n_r, n_z=n_z)

    for iz in range(n_z):
        mesh.boundary_edges.append((iz * n_r, 3, CENTERLINE))            # ir = 0
        mesh.boundary_edges.append((iz * n_r + n_r - 1, 1, EXTERNAL))    # ir = n_r-1
    for ir in range(n_r):
        mesh.boundary_edges.append((ir, 0, MIDPLANE))                    # iz = 0
        mesh.boundary_edges.append(((n_z - 1) * n_r + ir, 2, PLATEN))    # iz = n_z-1

    mesh.node_tags = {
        CENTERLINE: mesh.structured_line(ir=0),
        EXTERNAL: mesh.structured_line(ir=n_r),
        MIDPLANE: mesh.structured_line(iz=0),
        PLATEN: mesh.structured_line(iz=n_z),
    }
    return mesh


# ---------------------------------------------------------------------------
# reference element
# ---------------------------------------------------------------------------

def shape_eval(xi, eta):
    """Bilinear shape functions and reference gradients at (xi, eta).

    Returns
    -------
    n : (..., 4) array
        Shape function values, corner order (-1,-1), (1,-1), (1,1), (-1,1).
    dn : (..., 4, 2) array
        d n_a / d(xi, eta).
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    one = np.ones_like(xi)
    n = 0.25 * np.stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)], axis=-1
    )
    dn_dxi = 0.25 * np.stack([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)], axis=-1)
    dn_deta = 0.25 * np.stack([-(1 - xi) * one, -(1 + xi) * one,
                               (1 + xi) * one, (1 - xi) * one], axis=-1)
    return n, np.stack([dn_dxi, dn_deta], axis=-1)


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss rule on the reference square."""

    points: np.ndarray   # (n_gp, 2)
    weights: np.ndarray  # (n_gp,)

    @classmethod
    def gauss(cls, order=2):
        """order x order Gauss-Legendre rule (2 default, 3 for checks)."""
        x, w = np.polynomial.legendre.leggauss(order)
        pts = np.array([[xi, eta] for eta in x for xi in x])
        wts = np.array([wi * wj for wj in w for wi in w])
        return cls(points=pts, weights=wts)


def element_geometry(coords, rule):
    """Isoparametric geometry of a batch of elements at quadrature points.

    Parameters
    ----------
    coords : (n_el, 4, 2) array
        Corner coordinates of each element.
    rule : QuadratureRule

    Returns
    -------
    n : (n_gp, 4) shape values
    grad : (n_el, n_gp, 4, 2) physical shape gradients
    detj : (n_el, n_gp) Jacobian determinants (must be positive)
    gp_xy : (n_el, n_gp, 2) physical quadrature point coordinates
    """
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 2:
        coords = coords[None]
    n, dn = shape_eval(rule.points[:, 0], rule.points[:, 1])  # (g,4), (g,4,2)
    # jacobian J[e,g,i,j] = d x_i / d xi_j
    jac = np.einsum("eai,gaj->egij", coords, dn)
    detj = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(detj <= 0.0):
        raise MeshError("non-positive Jacobian: inverted or degenerate element")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv /= detj[..., None, None]
    # physical gradient: dN/dx_i = dN/dxi_j * dxi_j/dx_i  (inv is J^-1)
    grad = np.einsum("gaj,egji->egai", dn, inv)
    gp_xy = np.einsum("ga,eai->egi", n, coords)
    return n, grad, detj, gp_xy


# ---------------------------------------------------------------------------
# plain-text export
# ---------------------------------------------------------------------------

def export_mesh(mesh, stream):
    """Write a plain-text node/element listing.

    Format (documented in the README)::

        # hotpress mesh
        # nodes <count>
        <id> <r> <z>
        ...
        # elements <count>
        <id> <n0> <n1> <n2> <n3>
        ...
        # boundary <count>
        <elem> <local_edge> <tag>
    """
    stream.write("# hotpress mesh\n")
    stream.write(f"# nodes {mesh.n_nodes}\n")
    for i, (r, z) in enumerate(mesh.nodes):
        stream.write(f"{i} {r:.17g} {z:.17g}\n")
    stream.write(f"# elements {mesh.n_elems}\n")
    for i, conn in enumerate(mesh.elements):
        stream.write(f"{i} {conn[0]} {conn[1]} {conn[2]} {conn[3]}\n")
    stream.write(f"# boundary {len(mesh.boundary_edges)}\n")
    for elem, edge, tag in mesh.boundary_edges:
        stream.write(f"{elem} {edge} {tag}\n")
