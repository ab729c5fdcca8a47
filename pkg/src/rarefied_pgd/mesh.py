"""Triangular meshes of channel cross sections.

Lengths are nondimensional: the characteristic length (square side,
trapezoid lower base, disk radius) is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Local edge k of a triangle joins vertices k and (k + 1) % 3.
EDGE_VERTICES = ((0, 1), (1, 2), (2, 0))

TRAPEZOID_ANGLE_DEG = 54.74
TRAPEZOID_UPPER_BASE = 0.5


class MeshError(ValueError):
    """Invalid mesh geometry, topology or file contents."""


@dataclass(frozen=True)
class BoundaryEdge:
    element: int
    local_edge: int
    normal: tuple[float, float]
    length: float


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation with outward edge normals.

    ``neighbors[e, k]`` is the element across local edge ``k`` of element
    ``e`` (-1 on the boundary) and ``neighbor_edge[e, k]`` is the local edge
    index of that edge seen from the neighbour.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    domain_tag: str = "custom"
    areas: np.ndarray = field(init=False, repr=False)
    normals: np.ndarray = field(init=False, repr=False)
    edge_lengths: np.ndarray = field(init=False, repr=False)
    neighbors: np.ndarray = field(init=False, repr=False)
    neighbor_edge: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        verts = np.array(self.vertices, dtype=float)
        tris = np.array(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must have shape (n, 3)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise MeshError("triangle references a vertex index out of range")
        verts.setflags(write=False)
        tris.setflags(write=False)
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)

        p = verts[tris]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        scale = max(np.ptp(verts, axis=0).max(), 1.0) if len(verts) else 1.0
        bad = np.flatnonzero(areas <= 1e-14 * scale**2)
        if bad.size:
            e = int(bad[0])
            raise MeshError(
                f"inverted or degenerate element {e} (signed area {areas[e]:.3e})"
            )

        normals = np.empty((len(tris), 3, 2))
        lengths = np.empty((len(tris), 3))
        for k, (a, b) in enumerate(EDGE_VERTICES):
            t = p[:, b] - p[:, a]
            lengths[:, k] = np.hypot(t[:, 0], t[:, 1])
            # counter-clockwise ordering puts the outward normal on the right
            normals[:, k, 0] = t[:, 1] / lengths[:, k]
            normals[:, k, 1] = -t[:, 0] / lengths[:, k]

        neighbors = np.full((len(tris), 3), -1, dtype=np.int64)
        neighbor_edge = np.full((len(tris), 3), -1, dtype=np.int64)
        seen: dict[tuple[int, int], tuple[int, int]] = {}
        for e, tri in enumerate(tris):
            for k, (a, b) in enumerate(EDGE_VERTICES):
                va, vb = int(tri[a]), int(tri[b])
                key = (min(va, vb), max(va, vb))
                if key not in seen:
                    seen[key] = (e, k)
                    continue
                e2, k2 = seen[key]
                if e2 < 0:
                    raise MeshError(f"edge {key} shared by more than two elements (element {e})")
                if tris[e2][EDGE_VERTICES[k2][0]] != vb:
                    raise MeshError(
                        f"elements {e2} and {e} traverse edge {key} in the same direction"
                    )
                neighbors[e, k], neighbor_edge[e, k] = e2, k2
                neighbors[e2, k2], neighbor_edge[e2, k2] = e, k
                seen[key] = (-1, -1)

        for arr in (areas, normals, lengths, neighbors, neighbor_edge):
            arr.setflags(write=False)
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "edge_lengths", lengths)
        object.__setattr__(self, "neighbors", neighbors)
        object.__setattr__(self, "neighbor_edge", neighbor_edge)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def area(self) -> float:
        return float(self.areas.sum())

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def boundary_edges(self) -> list[BoundaryEdge]:
        out = []
        for e, k in zip(*np.nonzero(self.neighbors < 0)):
            n = self.normals[e, k]
            out.append(BoundaryEdge(int(e), int(k), (float(n[0]), float(n[1])),
                                    float(self.edge_lengths[e, k])))
        return out

    def edge_midpoints(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return np.stack([(p[:, a] + p[:, b]) / 2 for a, b in EDGE_VERTICES], axis=1)

    def locate(self, x: float, y: float, tol: float = 1e-12) -> int:
        """Index of an element containing (x, y), or -1."""
        p = self.vertices[self.triangles]
        q = np.array([x, y])
        lam = np.empty((len(p), 3))
        for k, (a, b) in enumerate(EDGE_VERTICES):
            t = p[:, b] - p[:, a]
            r = q - p[:, a]
            lam[:, k] = t[:, 0] * r[:, 1] - t[:, 1] * r[:, 0]
        inside = np.all(lam >= -tol * np.maximum(self.edge_lengths, 1.0), axis=1)
        hits = np.flatnonzero(inside)
        return int(hits[0]) if hits.size else -1


def _check_positive(name: str, value: int) -> int:
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _structured(xy_of, n: int, tag: str) -> TriMesh:
    # xy_of maps the unit square onto the domain; diagonals run along xi = eta
    xi = np.linspace(0.0, 1.0, n + 1)
    XI, ETA = np.meshgrid(xi, xi, indexing="ij")
    verts = np.stack(xy_of(XI.ravel(), ETA.ravel()), axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    tris = []
    for i in range(n):
        for j in range(n):
            a, b, c, d = idx[i, j], idx[i + 1, j], idx[i + 1, j + 1], idx[i, j + 1]
            tris.append((a, b, c))
            tris.append((a, c, d))
    return TriMesh(verts, np.array(tris), tag)


def generate_square_mesh(n_div: int) -> TriMesh:
    """Unit square centred at the origin, ``2 * n_div**2`` triangles.

    All diagonals lie along y = x, so the triangulation is invariant under
    the reflection (x, y) -> (y, x).
    """
    n = _check_positive("n_div", n_div)
    return _structured(lambda s, t: (s - 0.5, t - 0.5), n, "square")


def trapezoid_height() -> float:
    return 0.5 * (1.0 - TRAPEZOID_UPPER_BASE) * math.tan(math.radians(TRAPEZOID_ANGLE_DEG))


def trapezoid_area() -> float:
    return 0.5 * (1.0 + TRAPEZOID_UPPER_BASE) * trapezoid_height()


def generate_trapezoid_mesh(n_div: int) -> TriMesh:
    """Isosceles trapezoid: lower base 1 on y = 0, upper base 0.5, base angle 54.74 deg."""
    n = _check_positive("n_div", n_div)
    h = trapezoid_height()
    shrink = 1.0 - TRAPEZOID_UPPER_BASE

    def xy(s, t):
        return (s - 0.5) * (1.0 - shrink * t), h * t

    return _structured(xy, n, "trapezoid")


def generate_disk_mesh(n_ref: int) -> TriMesh:
    """Unit disk from ``n_ref`` concentric rings; ring k carries 6k vertices.

    Gives ``6 * n_ref**2`` triangles; the outer ring lies on the unit circle.
    """
    n = _check_positive("n_ref", n_ref)
    verts = [(0.0, 0.0)]
    rings = [[0]]
    for k in range(1, n + 1):
        nk = 6 * k
        ang = 2.0 * np.pi * np.arange(nk) / nk
        start = len(verts)
        if k == n:
            verts.extend(zip(np.cos(ang), np.sin(ang)))
        else:
            verts.extend(zip(k / n * np.cos(ang), k / n * np.sin(ang)))
        rings.append(list(range(start, start + nk)))
    verts = np.array(verts)

    tris = []
    for k in range(1, n + 1):
        inner, outer = rings[k - 1], rings[k]
        ni, no = len(inner), len(outer)
        i = j = 0
        while i < ni or j < no:
            if k == 1:
                tris.append((inner[0], outer[j % no], outer[(j + 1) % no]))
                j += 1
                i = ni
                continue
            next_outer = (j + 1) / no
            next_inner = (i + 1) / ni
            if j < no and (i >= ni or next_outer <= next_inner + 1e-12):
                tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
                j += 1
            else:
                tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
                i += 1
    tris = np.array(tris)
    p = verts[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    flip = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return TriMesh(verts, tris, "circle")


def save_mesh(mesh: TriMesh, path) -> None:
    lines = [f"trimesh {len(mesh.vertices)} {mesh.n_elements}"]
    lines += [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"t {i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> TriMesh:
    """Read the ``trimesh`` text format; normals are always recomputed."""
    path = Path(path)
    rows = [(n, ln.split()) for n, ln in enumerate(path.read_text().splitlines(), 1)]
    rows = [(n, tok) for n, tok in rows if tok and not tok[0].startswith("#")]
    if not rows or rows[0][1][0] != "trimesh" or len(rows[0][1]) != 3:
        raise MeshError(f"{path}: missing 'trimesh <n_vertices> <n_triangles>' header")
    try:
        nv, nt = int(rows[0][1][1]), int(rows[0][1][2])
    except ValueError as exc:
        raise MeshError(f"{path}:{rows[0][0]}: bad header counts") from exc
    verts, tris = [], []
    for n, tok in rows[1:]:
        try:
            if tok[0] == "v" and len(tok) == 3:
                verts.append((float(tok[1]), float(tok[2])))
            elif tok[0] == "t" and len(tok) == 4:
                tris.append((int(tok[1]), int(tok[2]), int(tok[3])))
            else:
                raise ValueError
        except ValueError as exc:
            raise MeshError(f"{path}:{n}: cannot parse line {' '.join(tok)!r}") from exc
    if len(verts) != nv or len(tris) != nt:
        raise MeshError(
            f"{path}: header declares {nv} vertices/{nt} triangles, "
            f"found {len(verts)}/{len(tris)}"
        )
    try:
        return TriMesh(np.array(verts).reshape(-1, 2), np.array(tris).reshape(-1, 3), "custom")
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc


def make_mesh(domain: str, refinement: int) -> TriMesh:
    if domain == "square":
        return generate_square_mesh(refinement)
    if domain == "trapezoid":
        return generate_trapezoid_mesh(refinement)
    if domain == "circle":
        return generate_disk_mesh(refinement)
    return load_mesh(domain)
