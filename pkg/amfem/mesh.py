# --------------------------------------------------
# mesh.py
# --------------------------------------------------
# Conforming 2-D triangulations with newest-vertex
# bisection (NVB):
#
#   ✔ build_mesh / builtin_domain (validated input,
#     four polygons with 0, 1 and 2 holes)
#   ✔ bisect with recursive closure, uniform_refine
#   ✔ genealogy: ancestor_map, is_refinement
#   ✔ shape measures and MarkedSet
#
# Conventions:
#   - triangles are counterclockwise vertex triples
#   - local edge i is the edge opposite local vertex i,
#     i.e. (tri[(i+1) % 3], tri[(i+2) % 3])
#   - refinement_edge[t] is the local index of the edge
#     NVB bisects next, so tri[refinement_edge[t]] is
#     the newest vertex
#   - global edges run low vertex index -> high
#
# A Mesh never changes after construction. `bisect`
# returns a new Mesh whose `parent` maps each triangle
# to the input triangle it came from and whose
# `parent_mesh` points at that input, so refinement
# chains can be walked by `ancestor_map`.
# --------------------------------------------------

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Union

import numpy as np

from .errors import MeshError, NotNestedError
from .metrics import metrics

logger = logging.getLogger(__name__)

AREA_TOL = 1e-12
BUILTIN_DOMAINS = ("square", "lshape", "square_one_hole", "square_two_holes")

# first Betti number of each builtin domain
BUILTIN_BETTI = {"square": 0, "lshape": 0, "square_one_hole": 1, "square_two_holes": 2}

_NEXT = np.array([1, 2, 0])
_PREV = np.array([2, 0, 1])
_MAX_COMPLETION_DEPTH = 200


def _frozen(values, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype)
    out.setflags(write=False)
    return out


def _signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _local_edge_lengths(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    return np.linalg.norm(p[:, _PREV] - p[:, _NEXT], axis=2)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable conforming triangulation plus its NVB genealogy."""

    vertices: np.ndarray
    triangles: np.ndarray
    refinement_edge: np.ndarray
    generation: np.ndarray
    parent: Optional[np.ndarray] = None
    parent_mesh: Optional["Mesh"] = None
    level: int = 0

    @property
    def num_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    # --------------------------------------------------
    # Topology
    # --------------------------------------------------

    @cached_property
    def _edge_data(self):
        tris = self.triangles
        nt = tris.shape[0]
        local = np.stack([tris[:, _NEXT], tris[:, _PREV]], axis=-1).reshape(-1, 2)
        keys = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        inverse = inverse.reshape(-1)
        signs = np.where(local[:, 0] < local[:, 1], 1.0, -1.0)

        owner = np.repeat(np.arange(nt), 3)
        order = np.argsort(inverse, kind="stable")
        starts = np.searchsorted(inverse[order], np.arange(edges.shape[0]))
        edge_tris = np.full((edges.shape[0], 2), -1, dtype=np.int64)
        edge_tris[:, 0] = owner[order[starts]]
        shared = counts >= 2
        edge_tris[shared, 1] = owner[order[starts[shared] + 1]]

        orientation = np.bincount(inverse, weights=signs, minlength=edges.shape[0])
        return {
            "edges": _frozen(edges, np.int64),
            "tri_edges": _frozen(inverse.reshape(nt, 3), np.int64),
            "tri_edge_signs": _frozen(signs.reshape(nt, 3), float),
            "edge_tris": _frozen(edge_tris, np.int64),
            "counts": counts,
            "orientation": orientation,
        }

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) vertex pairs, low index first."""
        return self._edge_data["edges"]

    @property
    def tri_edges(self) -> np.ndarray:
        """(nt, 3) global edge index of each local edge."""
        return self._edge_data["tri_edges"]

    @property
    def tri_edge_signs(self) -> np.ndarray:
        """+1 where the counterclockwise traversal of local edge i runs low -> high."""
        return self._edge_data["tri_edge_signs"]

    @property
    def edge_tris(self) -> np.ndarray:
        """(ne, 2) adjacent triangles; column 1 is -1 on the boundary."""
        return self._edge_data["edge_tris"]

    @cached_property
    def boundary(self) -> np.ndarray:
        return _frozen(self.edge_tris[:, 1] < 0, bool)

    # --------------------------------------------------
    # Geometry
    # --------------------------------------------------

    @cached_property
    def element_coordinates(self) -> np.ndarray:
        return _frozen(self.vertices[self.triangles], float)

    @cached_property
    def areas(self) -> np.ndarray:
        return _frozen(_signed_areas(self.vertices, self.triangles), float)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_T: longest edge of each triangle."""
        return _frozen(_local_edge_lengths(self.vertices, self.triangles).max(axis=1), float)

    @cached_property
    def inradii(self) -> np.ndarray:
        perimeter = _local_edge_lengths(self.vertices, self.triangles).sum(axis=1)
        return _frozen(2.0 * self.areas / perimeter, float)

    @cached_property
    def centroids(self) -> np.ndarray:
        return _frozen(self.element_coordinates.mean(axis=1), float)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.edges]
        return _frozen(np.linalg.norm(p[:, 1] - p[:, 0], axis=1), float)


@dataclass(frozen=True, eq=False)
class MarkedSet:
    """Sorted, duplicate-free triangle ids of one specific mesh."""

    mesh: Mesh
    ids: np.ndarray

    @classmethod
    def of(cls, mesh: Mesh, ids: Iterable[int]) -> "MarkedSet":
        arr = np.unique(np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids, dtype=np.int64))
        if arr.size and (arr[0] < 0 or arr[-1] >= mesh.num_triangles):
            bad = int(arr[0] if arr[0] < 0 else arr[-1])
            raise MeshError("marked id out of range", element=bad)
        return cls(mesh=mesh, ids=_frozen(arr, np.int64))

    def __len__(self) -> int:
        return int(self.ids.size)

    def __iter__(self):
        return iter(self.ids.tolist())

    def __contains__(self, item) -> bool:
        pos = np.searchsorted(self.ids, item)
        return bool(pos < self.ids.size and self.ids[pos] == item)


# --------------------------------------------------
# Construction and validation
# --------------------------------------------------


def initial_refinement_edges(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Longest edge of each triangle; ties go to the lowest opposite vertex index."""
    lengths = _local_edge_lengths(vertices, triangles)
    longest = lengths.max(axis=1, keepdims=True)
    candidate = lengths >= longest * (1.0 - 1e-12)
    opposite = np.where(candidate, triangles, np.iinfo(np.int64).max)
    return opposite.argmin(axis=1)


def check_structure(mesh: Mesh) -> None:
    """Edge-count and orientation part of conformity (cheap; run on every bisect)."""
    data = mesh._edge_data
    counts = data["counts"]
    over = np.flatnonzero(counts > 2)
    if over.size:
        raise MeshError("edge shared by more than two triangles", element=int(mesh.edge_tris[over[0], 0]))
    interior = counts == 2
    clash = np.flatnonzero(interior & (data["orientation"] != 0))
    if clash.size:
        raise MeshError("neighbouring triangles traverse a shared edge in the same direction",
                        element=int(mesh.edge_tris[clash[0], 1]))


def check_conformity(mesh: Mesh) -> None:
    """Full conformity check: structure, orientation and no hanging vertices."""
    check_structure(mesh)

    tol = AREA_TOL * _local_edge_lengths(mesh.vertices, mesh.triangles).max(axis=1) ** 2
    flipped = np.flatnonzero(mesh.areas <= tol)
    if flipped.size:
        raise MeshError("triangle is not counterclockwise", element=int(flipped[0]))

    # A hanging vertex always sits on an edge that only one triangle sees.
    for e in np.flatnonzero(mesh.boundary):
        a, b = mesh.vertices[mesh.edges[e]]
        d = b - a
        length_sq = float(d @ d)
        rel = mesh.vertices - a
        t = rel @ d / length_sq
        cross = d[0] * rel[:, 1] - d[1] * rel[:, 0]
        on_edge = (np.abs(cross) <= 1e-12 * length_sq) & (t > 1e-12) & (t < 1.0 - 1e-12)
        if on_edge.any():
            raise MeshError(
                f"hanging vertex {int(np.flatnonzero(on_edge)[0])} on edge {tuple(mesh.edges[e])}",
                element=int(mesh.edge_tris[e, 0]),
            )


def build_mesh(vertices, triangles, refinement_edge=None) -> Mesh:
    """
    Build and validate a mesh from raw coordinates and vertex triples.

    Rejects (with the offending element id): out-of-range indices, clockwise or
    degenerate triangles, duplicate triangles and non-conforming input. Missing
    refinement edges default to the longest edge of each triangle.
    """
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)

    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must be a list of 2-D coordinates")
    if vertices.shape[0] < 3:
        raise MeshError("a mesh needs at least 3 vertices")
    if triangles.ndim != 2 or triangles.shape[1] != 3 or triangles.shape[0] == 0:
        raise MeshError("triangles must be a non-empty list of index triples")

    nv = vertices.shape[0]
    out_of_range = np.flatnonzero(((triangles < 0) | (triangles >= nv)).any(axis=1))
    if out_of_range.size:
        raise MeshError("vertex index out of range", element=int(out_of_range[0]))

    areas = _signed_areas(vertices, triangles)
    tol = AREA_TOL * _local_edge_lengths(vertices, triangles).max(axis=1) ** 2
    degenerate = np.flatnonzero(np.abs(areas) <= tol)
    if degenerate.size:
        raise MeshError("degenerate (zero-area) triangle", element=int(degenerate[0]))
    inverted = np.flatnonzero(areas < 0)
    if inverted.size:
        raise MeshError("triangle is listed clockwise (inverted)", element=int(inverted[0]))

    _, first, inverse = np.unique(np.sort(triangles, axis=1), axis=0, return_index=True, return_inverse=True)
    duplicate = np.flatnonzero(first[inverse.reshape(-1)] != np.arange(triangles.shape[0]))
    if duplicate.size:
        raise MeshError("duplicate triangle", element=int(duplicate[0]))

    used = np.zeros(nv, dtype=bool)
    used[triangles.ravel()] = True
    if not used.all():
        raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any triangle")

    if refinement_edge is None:
        refinement_edge = initial_refinement_edges(vertices, triangles)
    else:
        refinement_edge = np.asarray(refinement_edge, dtype=np.int64)
        if refinement_edge.shape != (triangles.shape[0],):
            raise MeshError("refinement_edge needs one entry per triangle")
        bad = np.flatnonzero((refinement_edge < 0) | (refinement_edge > 2))
        if bad.size:
            raise MeshError("refinement_edge must be a local index 0-2", element=int(bad[0]))

    mesh = Mesh(
        vertices=_frozen(vertices, float),
        triangles=_frozen(triangles, np.int64),
        refinement_edge=_frozen(refinement_edge, np.int64),
        generation=_frozen(np.zeros(triangles.shape[0]), np.int64),
    )
    check_conformity(mesh)
    return mesh


def _grid_domain(nx: int, ny: int, origin=(0.0, 0.0), holes=()) -> Mesh:
    """Unit-cell grid, each cell split along its SW-NE diagonal, minus `holes` cells."""
    index = lambda i, j: j * (nx + 1) + i
    coords = [(origin[0] + i, origin[1] + j) for j in range(ny + 1) for i in range(nx + 1)]
    removed = set(holes)
    tris = []
    for j in range(ny):
        for i in range(nx):
            if (i, j) in removed:
                continue
            a, b, c, d = index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))

    tris = np.array(tris)
    used = np.unique(tris)
    renumber = np.full(len(coords), -1)
    renumber[used] = np.arange(used.size)
    return build_mesh(np.array(coords)[used], renumber[tris])


def builtin_domain(name: str) -> Mesh:
    """
    Coarse meshes of the benchmark domains:
      square            [0,1]^2, 2 triangles
      lshape            [-1,1]^2 minus [0,1]x[-1,0], 6 triangles, reentrant corner at 0
      square_one_hole   [0,3]^2 minus [1,2]^2
      square_two_holes  [0,5]^2 minus [1,2]x[2,3] and [3,4]x[2,3]
    """
    if name == "square":
        return _grid_domain(1, 1)
    if name == "lshape":
        return _grid_domain(2, 2, origin=(-1.0, -1.0), holes={(1, 0)})
    if name == "square_one_hole":
        return _grid_domain(3, 3, holes={(1, 1)})
    if name == "square_two_holes":
        return _grid_domain(5, 5, holes={(1, 2), (3, 2)})
    raise MeshError(f"unknown builtin domain {name!r}; expected one of {', '.join(BUILTIN_DOMAINS)}")


# --------------------------------------------------
# Queries
# --------------------------------------------------


def element_size(mesh: Mesh, element: int) -> float:
    if not 0 <= element < mesh.num_triangles:
        raise MeshError("element id out of range", element=element)
    return float(mesh.diameters[element])


def shape_regularity(mesh: Mesh) -> float:
    """min over triangles of inradius / h_T."""
    return float((mesh.inradii / mesh.diameters).min())


def angle_classes(mesh: Mesh, decimals: int = 9) -> set:
    """Distinct sorted angle triples (radians, rounded) appearing in the mesh."""
    p = mesh.element_coordinates
    angles = np.empty((mesh.num_triangles, 3))
    for i in range(3):
        u = p[:, _NEXT[i]] - p[:, i]
        v = p[:, _PREV[i]] - p[:, i]
        cos = (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, i] = np.arccos(np.clip(cos, -1.0, 1.0))
    angles = np.round(np.sort(angles, axis=1), decimals)
    return {tuple(row) for row in angles.tolist()}


def ancestor_map(fine: Mesh, coarse: Mesh) -> np.ndarray:
    """For each triangle of `fine`, the index of the triangle of `coarse` containing it."""
    idx = np.arange(fine.num_triangles)
    current = fine
    while current is not coarse:
        if current.parent_mesh is None:
            raise NotNestedError("meshes are not in one refinement chain")
        idx = current.parent[idx]
        current = current.parent_mesh
    return idx


def is_refinement(fine: Mesh, coarse: Mesh) -> bool:
    current = fine
    while current is not None:
        if current is coarse:
            return True
        current = current.parent_mesh
    return False


# --------------------------------------------------
# Newest-vertex bisection
# --------------------------------------------------


def _key(a: int, b: int):
    return (a, b) if a < b else (b, a)


def _edge_keys(tri):
    a, b, c = tri
    return (_key(b, c), _key(c, a), _key(a, b))


class _Bisection:
    """Mutable working copy of a mesh while one bisect call runs."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.coords = [tuple(v) for v in mesh.vertices.tolist()]
        self.tris = [tuple(t) for t in mesh.triangles.tolist()]
        self.ref = mesh.refinement_edge.tolist()
        self.gen = mesh.generation.tolist()
        self.root = list(range(len(self.tris)))
        self.active = [True] * len(self.tris)
        self.midpoints = {}
        self.splits = 0
        self.edge_map = {}
        for t, tri in enumerate(self.tris):
            for key in _edge_keys(tri):
                self.edge_map.setdefault(key, []).append(t)

    def refinement_key(self, t: int):
        tri, i = self.tris[t], self.ref[t]
        return _key(tri[(i + 1) % 3], tri[(i + 2) % 3])

    def neighbour(self, t: int, key):
        for s in self.edge_map.get(key, ()):
            if s != t:
                return s
        return None

    def refine(self, t: int, depth: int = 0) -> None:
        if depth > _MAX_COMPLETION_DEPTH:
            raise MeshError("newest-vertex completion did not terminate", element=t)
        key = self.refinement_key(t)
        nb = self.neighbour(t, key)
        if nb is not None and self.refinement_key(nb) != key:
            # make the neighbour compatible first; its child on `key` then
            # has `key` as refinement edge
            self.refine(nb, depth + 1)
            if not self.active[t]:
                return
            nb = self.neighbour(t, key)
            assert nb is not None and self.refinement_key(nb) == key
        self.split(t)
        if nb is not None:
            self.split(nb)

    def split(self, t: int) -> None:
        tri, i = self.tris[t], self.ref[t]
        v, p, q = tri[i], tri[(i + 1) % 3], tri[(i + 2) % 3]
        key = _key(p, q)
        m = self.midpoints.get(key)
        if m is None:
            (xp, yp), (xq, yq) = self.coords[p], self.coords[q]
            m = len(self.coords)
            self.coords.append((0.5 * (xp + xq), 0.5 * (yp + yq)))
            self.midpoints[key] = m

        self.active[t] = False
        for k in _edge_keys(tri):
            owners = self.edge_map[k]
            owners.remove(t)
            if not owners:
                del self.edge_map[k]

        # the new vertex is the newest vertex of both children
        for child, ref in (((v, p, m), 2), ((v, m, q), 1)):
            c = len(self.tris)
            self.tris.append(child)
            self.ref.append(ref)
            self.gen.append(self.gen[t] + 1)
            self.root.append(self.root[t])
            self.active.append(True)
            for k in _edge_keys(child):
                self.edge_map.setdefault(k, []).append(c)
        self.splits += 1

    def to_mesh(self) -> Mesh:
        keep = [t for t, alive in enumerate(self.active) if alive]
        return Mesh(
            vertices=_frozen(self.coords, float),
            triangles=_frozen([self.tris[t] for t in keep], np.int64),
            refinement_edge=_frozen([self.ref[t] for t in keep], np.int64),
            generation=_frozen([self.gen[t] for t in keep], np.int64),
            parent=_frozen([self.root[t] for t in keep], np.int64),
            parent_mesh=self.mesh,
            level=self.mesh.level + 1,
        )


def bisect(mesh: Mesh, marked: Union[MarkedSet, Iterable[int]]) -> Mesh:
    """
    Bisect every marked triangle across its refinement edge and complete the
    result to a conforming mesh by recursive NVB on neighbours.
    An empty marked set returns `mesh` itself.
    """
    if isinstance(marked, MarkedSet):
        if marked.mesh is not mesh:
            raise MeshError("marked set belongs to a different mesh")
        ids = marked.ids
    else:
        ids = MarkedSet.of(mesh, marked).ids

    if ids.size == 0:
        return mesh

    work = _Bisection(mesh)
    for t in ids.tolist():
        if work.active[t]:
            work.refine(t)

    refined = work.to_mesh()
    check_structure(refined)
    metrics.inc_bisections(work.splits)
    logger.debug({
        "msg": "bisect",
        "marked": int(ids.size),
        "bisections": work.splits,
        "cells_before": mesh.num_triangles,
        "cells_after": refined.num_triangles,
    })
    return refined


def uniform_refine(mesh: Mesh, levels: int = 1) -> Mesh:
    """`levels` rounds of two full NVB sweeps; each round halves every h_T."""
    for _ in range(2 * levels):
        mesh = bisect(mesh, np.arange(mesh.num_triangles))
    return mesh
