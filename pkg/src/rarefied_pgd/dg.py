"""Nodal discontinuous Galerkin space on triangles.

Warp & blend nodes and the orthonormal Dubiner basis on the reference
triangle (-1,-1), (1,-1), (-1,1), following Hesthaven & Warburton,
"Nodal Discontinuous Galerkin Methods" (2008).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .mesh import TriMesh

_ALPHA_OPT = (0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832)


def jacobi_p(x, alpha: float, beta: float, n: int) -> np.ndarray:
    """Orthonormal Jacobi polynomial of degree n evaluated at x."""
    x = np.asarray(x, dtype=float)
    pl = np.zeros((n + 1,) + x.shape)
    g0 = (2 ** (alpha + beta + 1) / (alpha + beta + 1)
          * gamma(alpha + 1) * gamma(beta + 1) / gamma(alpha + beta + 1))
    pl[0] = 1.0 / np.sqrt(g0)
    if n == 0:
        return pl[0]
    g1 = (alpha + 1) * (beta + 1) / (alpha + beta + 3) * g0
    pl[1] = ((alpha + beta + 2) * x / 2 + (alpha - beta) / 2) / np.sqrt(g1)
    a_old = 2 / (2 + alpha + beta) * np.sqrt((alpha + 1) * (beta + 1) / (alpha + beta + 3))
    for i in range(1, n):
        h1 = 2 * i + alpha + beta
        a_new = 2 / (h1 + 2) * np.sqrt(
            (i + 1) * (i + 1 + alpha + beta) * (i + 1 + alpha) * (i + 1 + beta)
            / (h1 + 1) / (h1 + 3))
        b_new = -(alpha**2 - beta**2) / h1 / (h1 + 2)
        pl[i + 1] = (-a_old * pl[i - 1] + (x - b_new) * pl[i]) / a_new
        a_old = a_new
    return pl[n]


def grad_jacobi_p(x, alpha: float, beta: float, n: int) -> np.ndarray:
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return np.sqrt(n * (n + alpha + beta + 1)) * jacobi_p(x, alpha + 1, beta + 1, n - 1)


def gauss_lobatto(n: int) -> np.ndarray:
    """Legendre-Gauss-Lobatto points on [-1, 1] (n + 1 of them)."""
    if n == 1:
        return np.array([-1.0, 1.0])
    inner = np.polynomial.legendre.Legendre.basis(n).deriv().roots()
    return np.concatenate(([-1.0], np.sort(inner.real), [1.0]))


def _warp_factor(n: int, rout: np.ndarray) -> np.ndarray:
    lgl = gauss_lobatto(n)
    req = np.linspace(-1, 1, n + 1)
    veq = np.stack([jacobi_p(req, 0, 0, i) for i in range(n + 1)], axis=1)
    pmat = np.stack([jacobi_p(rout, 0, 0, i) for i in range(n + 1)])
    lmat = np.linalg.solve(veq.T, pmat)
    warp = lmat.T @ (lgl - req)
    zerof = np.abs(rout) < 1.0 - 1e-10
    sf = 1.0 - (zerof * rout) ** 2
    return warp / sf + warp * (zerof - 1)


def nodes_2d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Warp & blend nodes on the reference triangle, returned as (r, s)."""
    alpha = _ALPHA_OPT[n - 1] if n - 1 < len(_ALPHA_OPT) else 5.0 / 3.0
    l1, l3 = [], []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            l1.append(i / n)
            l3.append(j / n)
    l1, l3 = np.array(l1), np.array(l3)
    l2 = 1.0 - l1 - l3
    x = -l2 + l3
    y = (-l2 - l3 + 2 * l1) / np.sqrt(3.0)
    w1 = 4 * l2 * l3 * _warp_factor(n, l3 - l2) * (1 + (alpha * l1) ** 2)
    w2 = 4 * l1 * l3 * _warp_factor(n, l1 - l3) * (1 + (alpha * l2) ** 2)
    w3 = 4 * l1 * l2 * _warp_factor(n, l2 - l1) * (1 + (alpha * l3) ** 2)
    x = x + w1 + np.cos(2 * np.pi / 3) * w2 + np.cos(4 * np.pi / 3) * w3
    y = y + np.sin(2 * np.pi / 3) * w2 + np.sin(4 * np.pi / 3) * w3
    # equilateral -> reference right triangle
    b1 = (np.sqrt(3.0) * y + 1) / 3
    b2 = (-3 * x - np.sqrt(3.0) * y + 2) / 6
    b3 = (3 * x - np.sqrt(3.0) * y + 2) / 6
    return -b2 + b3 - b1, -b2 - b3 + b1


def _rs_to_ab(r, s):
    r, s = np.asarray(r, float), np.asarray(s, float)
    a = np.full_like(r, -1.0)
    ok = np.abs(s - 1.0) > 1e-14
    a[ok] = 2 * (1 + r[ok]) / (1 - s[ok]) - 1
    return a, s


def vandermonde_2d(n: int, r, s) -> np.ndarray:
    a, b = _rs_to_ab(r, s)
    cols = []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            cols.append(np.sqrt(2.0) * jacobi_p(a, 0, 0, i)
                        * jacobi_p(b, 2 * i + 1, 0, j) * (1 - b) ** i)
    return np.stack(cols, axis=-1)


def grad_vandermonde_2d(n: int, r, s) -> tuple[np.ndarray, np.ndarray]:
    a, b = _rs_to_ab(r, s)
    vr, vs = [], []
    for i in range(n + 1):
        for j in range(n + 1 - i):
            fa, dfa = jacobi_p(a, 0, 0, i), grad_jacobi_p(a, 0, 0, i)
            gb, dgb = jacobi_p(b, 2 * i + 1, 0, j), grad_jacobi_p(b, 2 * i + 1, 0, j)
            dr = dfa * gb
            ds = dfa * (gb * 0.5 * (1 + a))
            if i > 0:
                dr = dr * (0.5 * (1 - b)) ** (i - 1)
                ds = ds * (0.5 * (1 - b)) ** (i - 1)
            tmp = dgb * (0.5 * (1 - b)) ** i
            if i > 0:
                tmp = tmp - 0.5 * i * gb * (0.5 * (1 - b)) ** (i - 1)
            ds = ds + fa * tmp
            vr.append(dr * 2 ** (i + 0.5))
            vs.append(ds * 2 ** (i + 0.5))
    return np.stack(vr, axis=-1), np.stack(vs, axis=-1)


@dataclass(frozen=True, eq=False)
class ReferenceElement:
    order: int
    r: np.ndarray
    s: np.ndarray
    vandermonde: np.ndarray
    mass: np.ndarray
    dr: np.ndarray
    ds: np.ndarray
    face_nodes: np.ndarray  # (3, Nfp), ordered along each face
    face_mass: np.ndarray  # (Nfp, Nfp) on [-1, 1]

    @property
    def n_p(self) -> int:
        return len(self.r)

    @property
    def n_fp(self) -> int:
        return self.order + 1

    def interpolation_row(self, r, s) -> np.ndarray:
        """Values of the nodal basis functions at reference points (r, s)."""
        p = vandermonde_2d(self.order, np.atleast_1d(r), np.atleast_1d(s))
        return np.linalg.solve(self.vandermonde.T, p.T).T


def reference_element(order: int) -> ReferenceElement:
    r, s = nodes_2d(order)
    v = vandermonde_2d(order, r, s)
    vr, vs = grad_vandermonde_2d(order, r, s)
    vinv = np.linalg.inv(v)
    tol = 1e-10
    faces = [
        np.flatnonzero(np.abs(s + 1) < tol),
        np.flatnonzero(np.abs(r + s) < tol),
        np.flatnonzero(np.abs(r + 1) < tol),
    ]
    # parametrise each face from its first vertex to its second
    faces[0] = faces[0][np.argsort(r[faces[0]])]
    faces[1] = faces[1][np.argsort(s[faces[1]])]
    faces[2] = faces[2][np.argsort(-s[faces[2]])]
    t = np.sort(r[faces[0]])
    v1 = np.stack([jacobi_p(t, 0, 0, i) for i in range(order + 1)], axis=1)
    return ReferenceElement(
        order=order, r=r, s=s, vandermonde=v,
        mass=np.linalg.inv(v @ v.T), dr=vr @ vinv, ds=vs @ vinv,
        face_nodes=np.array(faces), face_mass=np.linalg.inv(v1 @ v1.T),
    )


@dataclass(frozen=True, eq=False)
class DGSpace:
    """Affine nodal DG space of complete degree ``order`` on a mesh.

    Per-element arrays: ``x, y`` nodal coordinates (K, Np); ``mass`` (K, Np, Np);
    ``dx, dy`` nodal derivative matrices (K, Np, Np); ``face_map[e, f, i]`` is the
    neighbour node coinciding with face node i of face f (-1 on the boundary).
    """

    mesh: TriMesh
    ref: ReferenceElement
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    dx: np.ndarray = field(repr=False)
    dy: np.ndarray = field(repr=False)
    face_map: np.ndarray = field(repr=False)
    face_lift: np.ndarray = field(repr=False)  # (K, 3, Np, Nfp): int_f phi_i phi_fj

    @property
    def order(self) -> int:
        return self.ref.order

    @property
    def n_p(self) -> int:
        return self.ref.n_p

    @property
    def n_elements(self) -> int:
        return self.mesh.n_elements

    @property
    def shape(self) -> tuple[int, int]:
        return (self.mesh.n_elements, self.ref.n_p)

    @property
    def coordinates(self) -> np.ndarray:
        return np.stack([self.x.ravel(), self.y.ravel()], axis=1)

    def integrate(self, field_values) -> float:
        """Integral over the domain of a nodal field of shape (K, Np)."""
        f = np.asarray(field_values, dtype=float)
        return float(np.einsum("e,ij,ej->", self.jacobian, self.ref.mass, f))

    def integrate_many(self, fields) -> np.ndarray:
        """Integrals of a stack of nodal fields (..., K, Np)."""
        w = self.jacobian[:, None] * self.ref.mass.sum(axis=0)[None, :]
        return np.tensordot(np.asarray(fields), w, axes=([-2, -1], [0, 1]))

    def inner(self, f, g) -> float:
        return float(np.einsum("e,ij,ei,ej->", self.jacobian, self.ref.mass, f, g))

    def apply_mass(self, f) -> np.ndarray:
        """M f for nodal fields with element/node axes as the last two."""
        return self.jacobian[:, None] * np.einsum("ij,...ej->...ei", self.ref.mass, f)

    def interpolate(self, f) -> np.ndarray:
        """Nodal values of a callable f(x, y)."""
        return np.asarray(f(self.x, self.y), dtype=float) * np.ones(self.shape)

    def evaluate(self, values, x: float, y: float) -> np.ndarray:
        """Evaluate nodal fields (..., K, Np) at a physical point."""
        e = self.mesh.locate(x, y)
        if e < 0:
            raise ValueError(f"point ({x}, {y}) lies outside the domain")
        v = self.mesh.vertices[self.mesh.triangles[e]]
        a = np.column_stack([(v[1] - v[0]) / 2, (v[2] - v[0]) / 2])
        rs = np.linalg.solve(a, np.array([x, y]) - (v[1] + v[2]) / 2)
        row = self.ref.interpolation_row(rs[0], rs[1])[0]
        return np.asarray(values)[..., e, :] @ row


def build_dg_space(mesh: TriMesh, p: int) -> DGSpace:
    if int(p) != p or not 1 <= p <= 4:
        raise ValueError(f"polynomial order must be in [1, 4], got {p!r}")
    ref = reference_element(int(p))
    verts = mesh.vertices[mesh.triangles]
    v1, v2, v3 = verts[:, 0], verts[:, 1], verts[:, 2]
    r, s = ref.r[None, :], ref.s[None, :]
    x = 0.5 * (-(r + s) * v1[:, :1] + (1 + r) * v2[:, :1] + (1 + s) * v3[:, :1])
    y = 0.5 * (-(r + s) * v1[:, 1:] + (1 + r) * v2[:, 1:] + (1 + s) * v3[:, 1:])

    xr, xs = (v2[:, 0] - v1[:, 0]) / 2, (v3[:, 0] - v1[:, 0]) / 2
    yr, ys = (v2[:, 1] - v1[:, 1]) / 2, (v3[:, 1] - v1[:, 1]) / 2
    jac = xr * ys - xs * yr
    rx, sx, ry, sy = ys / jac, -yr / jac, -xs / jac, xr / jac
    dx = rx[:, None, None] * ref.dr + sx[:, None, None] * ref.ds
    dy = ry[:, None, None] * ref.dr + sy[:, None, None] * ref.ds
    mass = jac[:, None, None] * ref.mass

    k, nfp = mesh.n_elements, ref.n_fp
    face_map = np.full((k, 3, nfp), -1, dtype=np.int64)
    for e in range(k):
        for f in range(3):
            e2 = mesh.neighbors[e, f]
            if e2 < 0:
                continue
            f2 = mesh.neighbor_edge[e, f]
            mine = ref.face_nodes[f]
            theirs = ref.face_nodes[f2]
            d = (x[e, mine][:, None] - x[e2, theirs][None, :]) ** 2 + \
                (y[e, mine][:, None] - y[e2, theirs][None, :]) ** 2
            j = np.argmin(d, axis=1)
            if np.max(d[np.arange(nfp), j]) > 1e-16 * max(1.0, mesh.edge_lengths[e, f] ** 2):
                raise ValueError(f"face nodes of elements {e} and {e2} do not coincide")
            face_map[e, f] = theirs[j]

    lift_ref = np.zeros((3, ref.n_p, nfp))
    for f in range(3):
        lift_ref[f, ref.face_nodes[f], :] = ref.face_mass
    face_lift = 0.5 * mesh.edge_lengths[:, :, None, None] * lift_ref[None]

    for arr in (x, y, jac, mass, dx, dy, face_map, face_lift):
        arr.setflags(write=False)
    return DGSpace(mesh, ref, x, y, jac, mass, dx, dy, face_map, face_lift)
