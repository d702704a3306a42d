# --------------------------------------------------
# complex.py
# --------------------------------------------------
# Lowest-order discrete de Rham complex on a mesh, in
# the H(div) proxy:
#
#   P1 (nodal) --D0 = rot--> RT0 (edge fluxes)
#              --D1 = div--> P0 (element means)
#
#   ✔ incidence matrices D0, D1 and masses M0, M1, M2
#   ✔ FeFunction with arithmetic and evaluation
#   ✔ L2 projections, canonical interpolants
#   ✔ prolongation along the refinement genealogy
#
# Dofs:
#   degree 0  vertex values
#   degree 1  flux through each edge against the
#             global normal n_e = (t_y, -t_x) / |t|,
#             t running low -> high vertex
#   degree 2  mean value on each triangle
#
# On a triangle with vertices x_0, x_1, x_2 and area
# |T| the RT0 function with unit outward flux through
# local edge i is (x - x_i) / (2|T|); the global basis
# function carries the sign tri_edge_signs[t, i].
#
# All integrals use one 6-point, order-4 symmetric
# rule, exact for every product of basis functions in
# the mass matrices.
# --------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NotNestedError
from .mesh import Mesh, ancestor_map, is_refinement

logger = logging.getLogger(__name__)

# --------------------------------------------------
# Quadrature
# --------------------------------------------------

_A1, _W1 = 0.445948490915964886, 0.223381589678011466
_A2, _W2 = 0.091576213509770743, 0.109951743655321868
_B1, _B2 = 1.0 - 2.0 * _A1, 1.0 - 2.0 * _A2

QUAD_BARY = np.array([
    [_A1, _A1, _B1], [_A1, _B1, _A1], [_B1, _A1, _A1],
    [_A2, _A2, _B2], [_A2, _B2, _A2], [_B2, _A2, _A2],
])
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])
QUAD_WEIGHTS = QUAD_WEIGHTS / QUAD_WEIGHTS.sum()

# 3-point Gauss rule on [0, 1]
EDGE_POINTS = 0.5 + np.array([-1.0, 0.0, 1.0]) * np.sqrt(15.0) / 10.0
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

DataLike = Union[Callable[[np.ndarray], np.ndarray], "FeFunction", float]


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Coefficient vector of one space of the complex on one mesh."""

    degree: int
    coefficients: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError(f"degree must be 0, 1 or 2, got {self.degree}")
        coefficients = np.asarray(self.coefficients, dtype=float)
        expected = num_dofs(self.mesh, self.degree)
        if coefficients.shape != (expected,):
            raise ValueError(
                f"degree-{self.degree} function needs {expected} coefficients, got {coefficients.shape}"
            )
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def generation(self) -> int:
        return self.mesh.level

    def _check_peer(self, other: "FeFunction"):
        if other.degree != self.degree or other.mesh is not self.mesh:
            raise ValueError("functions live in different spaces")

    def __add__(self, other: "FeFunction") -> "FeFunction":
        self._check_peer(other)
        return FeFunction(self.degree, self.coefficients + other.coefficients, self.mesh)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        self._check_peer(other)
        return FeFunction(self.degree, self.coefficients - other.coefficients, self.mesh)

    def __mul__(self, scalar: float) -> "FeFunction":
        return FeFunction(self.degree, float(scalar) * self.coefficients, self.mesh)

    __rmul__ = __mul__


def num_dofs(mesh: Mesh, degree: int) -> int:
    return (mesh.num_vertices, mesh.num_edges, mesh.num_triangles)[degree]


@dataclass(frozen=True, eq=False)
class DeRhamComplex:
    mesh: Mesh
    D0: sp.csr_matrix
    D1: sp.csr_matrix
    M0: sp.csr_matrix
    M1: sp.csr_matrix
    M2: sp.csr_matrix

    @property
    def dofs(self) -> tuple:
        return (self.mesh.num_vertices, self.mesh.num_edges, self.mesh.num_triangles)

    def mass(self, degree: int) -> sp.csr_matrix:
        return (self.M0, self.M1, self.M2)[degree]

    def derivative(self, degree: int) -> sp.csr_matrix:
        return (self.D0, self.D1)[degree]

    @cached_property
    def quad_points(self) -> np.ndarray:
        """(nt, 6, 2) physical quadrature points."""
        return _quad_points(self.mesh)

    @cached_property
    def rt_basis_at_quad(self) -> np.ndarray:
        """(nt, 6, 3, 2) signed global RT0 basis functions at the quadrature points."""
        return _rt_basis(self.mesh, self.quad_points)

    @cached_property
    def _mass_solvers(self):
        return {}

    def solve_mass(self, degree: int, rhs: np.ndarray) -> np.ndarray:
        if degree == 2:
            return rhs / self.mesh.areas
        cache = self._mass_solvers
        if degree not in cache:
            cache[degree] = splu(self.mass(degree).tocsc())
        return cache[degree].solve(rhs)


# --------------------------------------------------
# Assembly
# --------------------------------------------------


def _quad_points(mesh: Mesh) -> np.ndarray:
    return np.einsum("qi,tid->tqd", QUAD_BARY, mesh.element_coordinates)


def _rt_basis(mesh: Mesh, points: np.ndarray) -> np.ndarray:
    diff = points[:, :, None, :] - mesh.element_coordinates[:, None, :, :]
    scale = mesh.tri_edge_signs / (2.0 * mesh.areas[:, None])
    return diff * scale[:, None, :, None]


def _assemble(rows: np.ndarray, cols: np.ndarray, values: np.ndarray, shape) -> sp.csr_matrix:
    # duplicate (row, col) pairs are summed by the COO -> CSR conversion
    return sp.coo_matrix((values.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def build_complex(mesh: Mesh) -> DeRhamComplex:
    """Assemble incidence-based derivatives and the three mass matrices."""
    nv, ne, nt = mesh.num_vertices, mesh.num_edges, mesh.num_triangles
    areas = mesh.areas
    tri_edges = mesh.tri_edges
    signs = mesh.tri_edge_signs

    # D0: edge flux of rot(hat_a) is hat_a(high) - hat_a(low)
    edge_ids = np.repeat(np.arange(ne), 2)
    D0 = _assemble(edge_ids, mesh.edges.ravel(), np.tile([-1.0, 1.0], ne), (ne, nv))

    tri_ids = np.repeat(np.arange(nt), 3)
    D1 = _assemble(tri_ids, tri_edges.ravel(), (signs / areas[:, None]).ravel(), (nt, ne))

    local0 = areas[:, None, None] * np.einsum("q,qi,qj->ij", QUAD_WEIGHTS, QUAD_BARY, QUAD_BARY)[None]
    tris = mesh.triangles
    M0 = _assemble(
        np.broadcast_to(tris[:, :, None], local0.shape),
        np.broadcast_to(tris[:, None, :], local0.shape),
        local0, (nv, nv),
    )

    phi = _rt_basis(mesh, _quad_points(mesh))
    local1 = areas[:, None, None] * np.einsum("q,tqid,tqjd->tij", QUAD_WEIGHTS, phi, phi)
    M1 = _assemble(
        np.broadcast_to(tri_edges[:, :, None], local1.shape),
        np.broadcast_to(tri_edges[:, None, :], local1.shape),
        local1, (ne, ne),
    )

    logger.debug({"msg": "build_complex", "vertices": nv, "edges": ne, "triangles": nt})
    return DeRhamComplex(mesh=mesh, D0=D0, D1=D1, M0=M0, M1=M1, M2=sp.diags(areas).tocsr())


# --------------------------------------------------
# Pointwise evaluation
# --------------------------------------------------


def affine_field(sigma: FeFunction):
    """
    Per-element affine form of a degree-1 function: sigma(x) = jac[t] @ x + offset[t].
    For RT0 the Jacobian is a multiple of the identity.
    """
    if sigma.degree != 1:
        raise ValueError("affine_field expects a degree-1 function")
    mesh = sigma.mesh
    c = sigma.coefficients[mesh.tri_edges] * mesh.tri_edge_signs / (2.0 * mesh.areas[:, None])
    slope = c.sum(axis=1)
    jac = slope[:, None, None] * np.eye(2)[None]
    offset = -np.einsum("ti,tid->td", c, mesh.element_coordinates)
    return jac, offset


def divergence(sigma: FeFunction) -> np.ndarray:
    jac, _ = affine_field(sigma)
    return jac[:, 0, 0] + jac[:, 1, 1]


def rot(sigma: FeFunction) -> np.ndarray:
    jac, _ = affine_field(sigma)
    return jac[:, 1, 0] - jac[:, 0, 1]


def barycentric(mesh: Mesh, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
    p = mesh.element_coordinates[elements]
    mat = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    lam12 = np.linalg.solve(mat, (points - p[:, 0])[..., None])[..., 0]
    return np.column_stack([1.0 - lam12.sum(axis=1), lam12])


def evaluate(fn: FeFunction, elements: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values of `fn` at `points`, each read from the matching entry of `elements`."""
    elements = np.asarray(elements)
    points = np.asarray(points, dtype=float)
    if fn.degree == 2:
        return fn.coefficients[elements]
    if fn.degree == 1:
        jac, offset = affine_field(fn)
        return np.einsum("nij,nj->ni", jac[elements], points) + offset[elements]
    lam = barycentric(fn.mesh, elements, points)
    return (lam * fn.coefficients[fn.mesh.triangles[elements]]).sum(axis=1)


def _host_elements(fn: FeFunction, mesh: Mesh) -> np.ndarray:
    """Element of fn.mesh containing each triangle of `mesh`."""
    if fn.mesh is mesh:
        return np.arange(mesh.num_triangles)
    if not is_refinement(mesh, fn.mesh):
        raise NotNestedError("function lives on a mesh that is not coarser than the target")
    return ancestor_map(mesh, fn.mesh)


def sample(f: DataLike, cx: DeRhamComplex) -> np.ndarray:
    """
    Values of `f` at the quadrature points: (nt, 6) for scalars, (nt, 6, 2) for
    vector fields. `f` may be a callable on (N, 2) point arrays, a constant, or
    an FeFunction on the same or a coarser mesh.
    """
    pts = cx.quad_points
    nt = pts.shape[0]
    if isinstance(f, FeFunction):
        hosts = np.repeat(_host_elements(f, cx.mesh), pts.shape[1])
        values = evaluate(f, hosts, pts.reshape(-1, 2))
    elif callable(f):
        values = np.asarray(f(pts.reshape(-1, 2)), dtype=float)
        if values.ndim == 0:
            values = np.full(pts.shape[0] * pts.shape[1], float(values))
    else:
        values = np.full(nt * pts.shape[1], float(f))
    return values.reshape((nt, pts.shape[1]) + values.shape[1:])


# --------------------------------------------------
# Projections and interpolation
# --------------------------------------------------


def canonical_interp_top(f: FeFunction, coarse: DeRhamComplex) -> FeFunction:
    """Element-integral preserving map of a fine piecewise constant onto a coarse mesh."""
    if f.degree != 2:
        raise ValueError("canonical_interp_top expects a degree-2 function")
    anc = ancestor_map(f.mesh, coarse.mesh)
    integrals = np.bincount(anc, weights=f.coefficients * f.mesh.areas, minlength=coarse.mesh.num_triangles)
    return FeFunction(2, integrals / coarse.mesh.areas, coarse.mesh)


def l2_project(f: DataLike, cx: DeRhamComplex, degree: int) -> FeFunction:
    """M_k-orthogonal projection of `f` onto the degree-`degree` space of `cx`."""
    if isinstance(f, FeFunction) and f.degree == 2 and degree == 2 and f.mesh is not cx.mesh \
            and is_refinement(f.mesh, cx.mesh):
        return canonical_interp_top(f, cx)

    values = sample(f, cx)
    areas = cx.mesh.areas
    if degree == 2:
        return FeFunction(2, values @ QUAD_WEIGHTS, cx.mesh)
    if degree == 1:
        local = areas[:, None] * np.einsum("q,tqd,tqid->ti", QUAD_WEIGHTS, values, cx.rt_basis_at_quad)
        rhs = np.bincount(cx.mesh.tri_edges.ravel(), weights=local.ravel(), minlength=cx.mesh.num_edges)
        return FeFunction(1, cx.solve_mass(1, rhs), cx.mesh)
    if degree == 0:
        local = areas[:, None] * np.einsum("q,tq,qi->ti", QUAD_WEIGHTS, values, QUAD_BARY)
        rhs = np.bincount(cx.mesh.triangles.ravel(), weights=local.ravel(), minlength=cx.mesh.num_vertices)
        return FeFunction(0, cx.solve_mass(0, rhs), cx.mesh)
    raise ValueError(f"degree must be 0, 1 or 2, got {degree}")


def edge_points(mesh: Mesh) -> np.ndarray:
    """(ne, 3, 2) Gauss points on each edge, ordered low -> high vertex."""
    p = mesh.vertices[mesh.edges]
    return p[:, None, 0] + EDGE_POINTS[None, :, None] * (p[:, None, 1] - p[:, None, 0])


def canonical_interp_rt(v: DataLike, cx: DeRhamComplex) -> FeFunction:
    """Edge fluxes of a vector field, integrated with 3-point Gauss per edge."""
    mesh = cx.mesh
    pts = edge_points(mesh)
    tangent = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    scaled_normal = np.column_stack([tangent[:, 1], -tangent[:, 0]])  # |e| n_e

    if isinstance(v, FeFunction):
        if v.degree != 1:
            raise ValueError("canonical_interp_rt expects a vector field")
        hosts = _host_elements(v, mesh)[mesh.edge_tris[:, 0]]
        values = evaluate(v, np.repeat(hosts, 3), pts.reshape(-1, 2))
    else:
        values = np.asarray(v(pts.reshape(-1, 2)), dtype=float)
        if values.ndim == 1:
            values = np.broadcast_to(values, (pts.shape[0] * 3, 2))
    values = values.reshape(pts.shape)

    fluxes = np.einsum("g,egd,ed->e", EDGE_WEIGHTS, values, scaled_normal)
    return FeFunction(1, fluxes, mesh)


def prolong(f: FeFunction, fine: DeRhamComplex) -> FeFunction:
    """The same field written in the (nested) spaces of a finer complex."""
    if f.mesh is fine.mesh:
        return f
    if not is_refinement(fine.mesh, f.mesh):
        raise NotNestedError("prolong target is not a refinement of the source mesh")
    if f.degree == 2:
        return FeFunction(2, f.coefficients[ancestor_map(fine.mesh, f.mesh)], fine.mesh)
    if f.degree == 1:
        return canonical_interp_rt(f, fine)
    mesh = fine.mesh
    owner = np.empty(mesh.num_vertices, dtype=np.int64)
    owner[mesh.triangles.ravel()] = np.repeat(np.arange(mesh.num_triangles), 3)
    hosts = ancestor_map(mesh, f.mesh)[owner]
    return FeFunction(0, evaluate(f, hosts, mesh.vertices), mesh)


# --------------------------------------------------
# Norms
# --------------------------------------------------


def inner(a: FeFunction, b: FeFunction, cx: DeRhamComplex) -> float:
    a._check_peer(b)
    return float(a.coefficients @ (cx.mass(a.degree) @ b.coefficients))


def norm_sq(fn: FeFunction, cx: DeRhamComplex) -> float:
    return inner(fn, fn, cx)


def element_norms_sq(fn: FeFunction, cx: DeRhamComplex) -> np.ndarray:
    """Per-element squared L2 norms."""
    areas = cx.mesh.areas
    if fn.degree == 2:
        return areas * fn.coefficients ** 2
    values = sample(fn, cx)
    if fn.degree == 1:
        values = (values ** 2).sum(axis=-1)
    else:
        values = values ** 2
    return areas * (values @ QUAD_WEIGHTS)


def l2_error(exact: Callable[[np.ndarray], np.ndarray], fn: FeFunction, cx: DeRhamComplex) -> float:
    """||exact - fn||_{L2} by quadrature."""
    diff = sample(exact, cx) - sample(fn, cx)
    if diff.ndim == 3:
        diff = (diff ** 2).sum(axis=-1)
    else:
        diff = diff ** 2
    return float(np.sqrt((cx.mesh.areas * (diff @ QUAD_WEIGHTS)).sum()))
