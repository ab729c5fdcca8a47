"""Upwind DG sweeps for steady linear advection-relaxation problems.

For every direction b_t = (cos t, sin t) and every (scale a, relax c) pair
we solve

    a (b_t . grad) g + c g = f   in the domain,   g = 0 on inflow,

in the weak form

    a (S_t g + sum_in |b.n| E_f (g - g_ext)) + c M g = F,

where F is the caller's weak right-hand side (already multiplied by the
mass matrix). Elements are processed in upwind order; all directions are
swept together, one dependency level at a time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dg import DGSpace
from .errors import NumericalError

INFLOW_TOL = 1e-13


@dataclass
class _Level:
    theta: np.ndarray
    element: np.ndarray
    pair: np.ndarray  # theta * K + element
    ext_pair: np.ndarray  # (P, 3 * Nfp) upwind neighbour pair, ghost when uncoupled
    ext_node: np.ndarray  # (P, 3 * Nfp)
    lift: np.ndarray  # (P, Np, 3 * Nfp) |b.n| * face mass on coupled faces


@dataclass
class Factorization:
    scale: np.ndarray
    relax: np.ndarray
    inverse: list | None  # per level (P, Ns, Np, Np); None -> solve per level


class UpwindTransport:
    """Geometry of the upwind DG operator for a fixed set of directions."""

    def __init__(self, dg: DGSpace, directions):
        self.dg = dg
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        self.directions = dirs
        mesh = dg.mesh
        n_t, k = len(dirs), mesh.n_elements
        bn = np.einsum("td,ekd->tek", dirs, mesh.normals)
        inflow = bn < -INFLOW_TOL
        coupled = inflow & (mesh.neighbors[None] >= 0)
        self.bn = bn
        self.inflow = inflow
        self.coupled = coupled

        sx = np.einsum("eij,ejk->eik", dg.mass, dg.dx)
        sy = np.einsum("eij,ejk->eik", dg.mass, dg.dy)
        base = dirs[:, 0, None, None, None] * sx[None] + dirs[:, 1, None, None, None] * sy[None]
        fn = dg.ref.face_nodes
        for f in range(3):
            w = np.where(inflow[:, :, f], -bn[:, :, f], 0.0)
            base[:, :, :, fn[f]] += w[:, :, None, None] * dg.face_lift[None, :, f]
        self.base = base

        level = np.zeros((n_t, k), dtype=np.int64)
        nbr = np.where(mesh.neighbors >= 0, mesh.neighbors, 0)
        for _ in range(k + 1):
            cand = np.where(coupled, level[:, nbr.ravel()].reshape(n_t, k, 3) + 1, 0).max(axis=2)
            if np.array_equal(cand, level):
                break
            level = cand
        else:
            raise NumericalError("upwind dependency graph has a cycle")
        self.level = level

        ghost = n_t * k
        nfp = dg.ref.n_fp
        self.levels = []
        for lv in range(int(level.max()) + 1):
            t_idx, e_idx = np.nonzero(level == lv)
            cpl = coupled[t_idx, e_idx]  # (P, 3)
            nb = mesh.neighbors[e_idx]
            ext_pair = np.where(cpl, t_idx[:, None] * k + nb, ghost)
            ext_node = np.where(cpl[:, :, None], dg.face_map[e_idx], 0)
            w = np.where(cpl, -bn[t_idx, e_idx], 0.0)
            lift = w[:, :, None, None] * dg.face_lift[e_idx]  # (P, 3, Np, Nfp)
            self.levels.append(_Level(
                theta=t_idx, element=e_idx, pair=t_idx * k + e_idx,
                ext_pair=np.repeat(ext_pair, nfp, axis=1),
                ext_node=ext_node.reshape(len(t_idx), 3 * nfp),
                lift=lift.transpose(0, 2, 1, 3).reshape(len(t_idx), -1, 3 * nfp),
            ))

    @property
    def n_directions(self) -> int:
        return len(self.directions)

    def factorize(self, scale, relax, cache: bool = True) -> Factorization:
        scale = np.atleast_1d(np.asarray(scale, dtype=float))
        relax = np.broadcast_to(np.asarray(relax, dtype=float), scale.shape).copy()
        if np.any(scale < 0) or np.any(relax < 0):
            raise ValueError("transport speed and relaxation must be non-negative")
        inv = None
        if cache:
            try:
                inv = [np.linalg.inv(self._local(lvl, scale, relax)) for lvl in self.levels]
            except np.linalg.LinAlgError as exc:
                raise NumericalError("singular element matrix in transport sweep") from exc
            if not all(np.all(np.isfinite(a)) for a in inv):
                raise NumericalError("singular element matrix in transport sweep")
        return Factorization(scale, relax, inv)

    def _local(self, lvl: _Level, scale, relax):
        return (scale[:, None, None] * self.base[lvl.theta, lvl.element][:, None]
                + relax[:, None, None] * self.dg.mass[lvl.element][:, None])

    def sweep(self, rhs, fac: Factorization) -> np.ndarray:
        """Solve for all directions/speeds; rhs broadcasts to (Nt, K, Ns, Np, Nk)."""
        rhs = np.asarray(rhs, dtype=float)
        while rhs.ndim < 5:
            rhs = rhs[None]
        n_t, k = self.n_directions, self.dg.n_elements
        n_s, n_p, n_k = len(fac.scale), self.dg.n_p, rhs.shape[-1]
        per_theta = rhs.shape[0] != 1
        g = np.zeros((n_t * k + 1, n_s, n_p, n_k))  # last block: zero ghost
        sc = fac.scale[None, None, :, None]
        for i, lvl in enumerate(self.levels):
            p = len(lvl.pair)
            b = rhs[lvl.theta if per_theta else 0, lvl.element]
            ext = g[lvl.ext_pair, :, lvl.ext_node, :]  # (P, 3Nfp, Ns, Nk)
            up = lvl.lift @ ext.reshape(p, ext.shape[1], n_s * n_k)
            b = b + (up.reshape(p, n_p, n_s, n_k) * sc).transpose(0, 2, 1, 3)
            if fac.inverse is not None:
                g[lvl.pair] = fac.inverse[i] @ b
            else:
                try:
                    g[lvl.pair] = np.linalg.solve(self._local(lvl, fac.scale, fac.relax), b)
                except np.linalg.LinAlgError as exc:
                    raise NumericalError("singular element matrix in transport sweep") from exc
        return g[:-1].reshape(n_t, k, n_s, n_p, n_k)

    def apply(self, x) -> np.ndarray:
        """Weak advection operator W_t x for fields x of shape (Nt, K, Np)."""
        x = np.asarray(x, dtype=float)
        out = np.einsum("teij,tej->tei", self.base, x)
        mesh = self.dg.mesh
        fn_map = self.dg.face_map
        for f in range(3):
            t_idx, e_idx = np.nonzero(self.coupled[:, :, f])
            if t_idx.size == 0:
                continue
            ext = x[t_idx[:, None], mesh.neighbors[e_idx, f][:, None], fn_map[e_idx, f]]
            lift = -self.bn[t_idx, e_idx, f][:, None, None] * self.dg.face_lift[e_idx, f]
            np.add.at(out, (t_idx, e_idx), -np.einsum("qpj,qj->qp", lift, ext))
        return out


def dg_transport_solve(dg: DGSpace, direction, v_r: float, delta: float, rhs,
                       inflow=None) -> np.ndarray:
    """Solve v_r (b . grad) g + delta g = rhs for one direction b.

    ``rhs`` is a nodal field (K, Np) or a callable of (x, y); ``inflow`` is
    optional boundary data g_b(x, y) (zero when omitted).
    """
    if not v_r > 0:
        raise ValueError(f"v_r must be positive, got {v_r!r}")
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta!r}")
    b = np.asarray(direction, dtype=float)
    op = UpwindTransport(dg, b[None, :])
    f = dg.interpolate(rhs) if callable(rhs) else np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("rhs must be finite")
    weak = dg.apply_mass(f)
    if inflow is not None:
        mesh = dg.mesh
        fn = dg.ref.face_nodes
        for e, f_loc in zip(*np.nonzero(op.inflow[0] & (mesh.neighbors < 0))):
            nodes = fn[f_loc]
            gb = np.asarray(inflow(dg.x[e, nodes], dg.y[e, nodes]), dtype=float) * np.ones(len(nodes))
            weak[e] += v_r * -op.bn[0, e, f_loc] * dg.face_lift[e, f_loc] @ gb
    fac = op.factorize([v_r], [delta])
    return op.sweep(weak[None, :, None, :, None], fac)[0, :, 0, :, 0]
