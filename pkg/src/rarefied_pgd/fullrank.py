"""Full-rank discrete-velocity solver with source iteration on the moments.

For a fixed direction theta and speed v_r the transport operator
L = v_r (b_theta . grad) + delta does not depend on v_z, and the collision
right-hand side is

    a(v) u(x) + b(v) q(x) + c(v),    a = 2 delta v_z f_eq,
                                     b = (4/15) delta v_z (v^2 - 5/2) f_eq,
                                     c = -s(v).

Hence h = a L^-1 u + b L^-1 q + c L^-1 1, and one source iteration only needs
two sweeps per (theta, v_r) instead of one per discrete velocity. The result
is identical to sweeping every (v_r, theta, v_z) separately.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discretization import DiscretizationSet
from .errors import ConvergenceError

HEAT_COUPLING = 4.0 / 15.0
DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 20000


@dataclass
class MacroFields:
    """Flow velocity and heat flux at the DG nodes, shape (K, Np)."""

    u: np.ndarray
    q: np.ndarray
    delta: float | None = None
    case: str | None = None
    G_P: float | None = None
    G_T: float | None = None


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    wall_time: float
    converged: bool = True
    residual_history: list = field(default_factory=list, repr=False)


def collision_coefficients(velocity, delta: float, case: str):
    """(a, b, c) tables of shape (N_r, N_z) multiplying u, q and 1."""
    a = 2.0 * delta * velocity.vz * velocity.feq
    b = HEAT_COUPLING * delta * velocity.heat * velocity.feq
    c = -velocity.source(case)
    return a, b, c


@dataclass(eq=False)
class DistributionField:
    """Perturbation h on (element, node, v_r, theta, v_z).

    Stored in factored form: ``basis[t, e, r, n, k]`` holds L^-1 applied to u,
    q and 1 (k = 0, 1, 2) and ``coeffs[k, r, z]`` the matching velocity
    tables; ``values`` materializes the dense array on demand.
    """

    disc: DiscretizationSet
    case: str
    delta: float
    basis: np.ndarray = field(repr=False)
    coeffs: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple:
        k, n_p = self.disc.dg.shape
        return (k, n_p, self.disc.n_r, self.disc.n_theta, self.disc.n_z)

    @property
    def values(self) -> np.ndarray:
        return np.einsum("terpk,krz->eprtz", self.basis, self.coeffs, optimize=True)

    def at(self, j1: int, j3: int, j2: int) -> np.ndarray:
        """Nodal field (K, Np) for one discrete velocity."""
        return self.basis[j3, :, j1] @ self.coeffs[:, j1, j2]

    def unfolding(self) -> np.ndarray:
        """Matrix with rows (element, node, theta) and columns (v_r, v_z)."""
        k, n_p, n_r, n_t, n_z = self.shape
        return np.ascontiguousarray(self.values.transpose(0, 1, 3, 2, 4)).reshape(k * n_p * n_t, n_r * n_z)


def compute_moments(h, velocity, angular) -> MacroFields:
    """u = sum v_z h dv dtheta and q = sum v_z (v^2 - 5/2) h dv dtheta."""
    if isinstance(h, DistributionField):
        w = angular.theta_weights
        wu = np.einsum("krz,rz->kr", h.coeffs, velocity.weights * velocity.vz)
        wq = np.einsum("krz,rz->kr", h.coeffs, velocity.weights * velocity.heat)
        u = np.einsum("terpk,kr,t->ep", h.basis, wu, w)
        q = np.einsum("terpk,kr,t->ep", h.basis, wq, w)
        return MacroFields(u, q, h.delta, h.case)
    h = np.asarray(h, dtype=float)
    n_r, n_z = velocity.shape
    if h.ndim != 5 or h.shape[2:] != (n_r, angular.size, n_z):
        raise ValueError(
            f"distribution of shape {h.shape} does not match grids (K, Np, {n_r}, {angular.size}, {n_z})")
    u = np.einsum("eprtz,rz,t->ep", h, velocity.weights * velocity.vz, angular.theta_weights)
    q = np.einsum("eprtz,rz,t->ep", h, velocity.weights * velocity.heat, angular.theta_weights)
    return MacroFields(u, q)


def flow_rate_GP(macro: MacroFields, dg) -> float:
    return -2.0 * dg.integrate(macro.u)


def flow_rate_GT(macro: MacroFields, dg) -> float:
    return 2.0 * dg.integrate(macro.q)


def _check_case(case: str) -> str:
    if case not in ("P", "T"):
        raise ValueError(f"case must be 'P' or 'T', got {case!r}")
    return case


def solve_full_rank(disc: DiscretizationSet, case: str, delta: float,
                    tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    callback=None):
    """Source iteration; returns (DistributionField, MacroFields, SolveReport).

    Converged when max|u_new - u| / max|u_new| and the same for q fall below
    ``tol``. Raises ConvergenceError (carrying the last iterate) at ``max_iter``.
    """
    _check_case(case)
    if not np.isfinite(delta) or delta < 0:
        raise ValueError(f"delta must be finite and non-negative, got {delta!r}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    t0 = time.perf_counter()
    dg, vel, ang = disc.dg, disc.velocity, disc.angular
    op = disc.transport
    fac = op.factorize(vel.r_nodes, np.full(disc.n_r, float(delta)))

    a, b, c = collision_coefficients(vel, delta, case)
    coeffs = np.stack([a, b, c])
    # moment weights: out[m, t, r, k] with m in (u, q), k in (a, b, c)
    mw = np.stack([vel.weights * vel.vz, vel.weights * vel.heat])
    wk = np.einsum("mrz,krz->rmk", mw, coeffs)
    wt = ang.theta_weights
    w_flow = np.einsum("t,rmk->trkm", wt, wk[:, :, :2])  # (Nt, Nr, 2, 2)

    ones = dg.apply_mass(np.ones(dg.shape))
    g1 = op.sweep(ones[None, :, None, :, None], fac)[..., 0]  # (Nt, K, Nr, Np)
    const = np.einsum("terp,t,rm->mep", g1, wt, wk[:, :, 2])

    n_t, k, n_r, n_p = g1.shape
    u = np.zeros(dg.shape)
    q = np.zeros(dg.shape)
    history = []
    g = None
    res = np.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        if delta > 0 and (np.any(u) or np.any(q)):
            rhs = np.stack([dg.apply_mass(u), dg.apply_mass(q)], axis=-1)
            g = op.sweep(rhs[None, :, None], fac)  # (Nt, K, Nr, Np, 2)
            gm = g.transpose(1, 3, 0, 2, 4).reshape(k * n_p, -1) @ w_flow.reshape(-1, 2)
            new = gm.T.reshape(2, k, n_p) + const
        else:
            g = np.zeros((n_t, k, n_r, n_p, 2))
            new = const.copy()
        du = np.max(np.abs(new[0] - u)) / max(np.max(np.abs(new[0])), 1e-12)
        dq = np.max(np.abs(new[1] - q)) / max(np.max(np.abs(new[1])), 1e-12)
        res = max(du, dq)
        history.append(res)
        u, q = new[0], new[1]
        if callback is not None:
            callback(it, res)
        if res < tol:
            converged = True
            break

    # the final sweep used the previous moments, so h and (u, q) agree exactly
    basis = np.concatenate([g, g1[..., None]], axis=-1)
    hfield = DistributionField(disc, case, float(delta), basis, coeffs)
    macro = MacroFields(u, q, float(delta), case)
    macro.G_P = flow_rate_GP(macro, dg) if case == "P" else None
    macro.G_T = flow_rate_GT(macro, dg) if case == "P" else None
    report = SolveReport(it, float(res), time.perf_counter() - t0, converged, history)
    if not converged:
        raise ConvergenceError(
            f"source iteration did not converge in {max_iter} iterations (residual {res:.3e})",
            partial=(hfield, macro, report))
    return hfield, macro, report


FULL_RANK_KIND = "rarefied-full-rank"


def save_full_rank(h: DistributionField, macro: MacroFields, report: SolveReport, path) -> None:
    """Container with the factored distribution, macro fields and mesh tables."""
    from .storage import write_container

    disc = h.disc
    header = {"case": h.case, "delta": h.delta, "iterations": report.iterations,
              "final_residual": report.final_residual, "p": disc.dg.order,
              "N_theta": disc.n_theta, "domain": disc.mesh.domain_tag, **disc.velocity.params()}
    write_container(path, FULL_RANK_KIND, header, {
        "vertices": disc.mesh.vertices, "triangles": disc.mesh.triangles,
        "basis": h.basis, "coeffs": h.coeffs, "u": macro.u, "q": macro.q})


def load_full_rank(path, disc: DiscretizationSet | None = None):
    """Return (DistributionField, MacroFields, header)."""
    from .pgd import disc_from_header
    from .storage import read_container

    header, data = read_container(path, FULL_RANK_KIND)
    if disc is None:
        disc = disc_from_header(header, data)
    h = DistributionField(disc, header["case"], float(header["delta"]), data["basis"], data["coeffs"])
    macro = MacroFields(data["u"], data["q"], float(header["delta"]), header["case"])
    if macro.case == "P":
        macro.G_P = flow_rate_GP(macro, disc.dg)
        macro.G_T = flow_rate_GT(macro, disc.dg)
    return h, macro, header
