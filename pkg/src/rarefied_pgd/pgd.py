"""Proper generalised decomposition of the linearized kinetic equation.

The perturbation is sought as h = sum_i X_i(x, y, theta) V_i(v_r, v_z[, delta]).
Spatio-angular modes X live on the DG space times the angular grid, shape
(N_theta, K, Np); velocity modes V on (N_delta, N_r, N_z). A single-delta run
is the parametric algorithm on a one-node delta grid with unit weight, so
both share one code path.

Discrete inner products: <X, X'> = sum_t dtheta_t X_t^T M X'_t and
<V, V'> = sum_d q_d sum_rz w_rz V V' (q_d are delta weights, w includes v_r).
The spatial Galerkin coefficients use the same DG bilinear form as the
transport solver (volume, upwind jump and inflow-wall terms), so the velocity
and spatio-angular equations are projections of one discrete system.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.interpolate import PchipInterpolator
from scipy.sparse.linalg import LinearOperator, gmres

from .discretization import DiscretizationSet, build_discretization
from .errors import ConvergenceError, NearSingularError, NumericalError, OutOfRangeError
from .fullrank import HEAT_COUPLING, MacroFields, _check_case, flow_rate_GP, flow_rate_GT
from .grids import DeltaGrid
from .mesh import TriMesh
from .storage import read_container, write_container

PIVOT_TOL = 1e-14
FORMAT_VERSION = 1
MODES_KIND = "rarefied-pgd-modes"


# ---------------------------------------------------------------------------
# mode containers


@dataclass(eq=False)
class PGDModeSet:
    """Separated representation; Y, U, Q are recomputed from X and V."""

    disc: DiscretizationSet
    case: str
    delta_grid: DeltaGrid
    X: list = field(default_factory=list, repr=False)  # each (Nt, K, Np)
    V: list = field(default_factory=list, repr=False)  # each (Nd, Nr, Nz)
    amplitudes: list = field(default_factory=list)
    parametric: bool = False
    measure: str = "delta"

    @property
    def n_modes(self) -> int:
        return len(self.X)

    @property
    def delta(self) -> float | None:
        return None if self.parametric else float(self.delta_grid.delta_nodes[0])

    @property
    def Y(self) -> list:
        w = self.disc.angular.theta_weights
        return [np.tensordot(w, x, axes=1) for x in self.X]

    @property
    def U(self) -> list:
        vel = self.disc.velocity
        return [np.einsum("drz,rz->d", v, vel.weights * vel.vz) for v in self.V]

    @property
    def Q(self) -> list:
        vel = self.disc.velocity
        return [np.einsum("drz,rz->d", v, vel.weights * vel.heat) for v in self.V]

    def truncated(self, m: int) -> "PGDModeSet":
        return PGDModeSet(self.disc, self.case, self.delta_grid, self.X[:m], self.V[:m],
                          self.amplitudes[:m], self.parametric, self.measure)

    def interpolator(self):
        return ModeInterpolator(self)


@dataclass
class ModeRecord:
    fixed_point_iterations: int
    residual: float
    residual_history: list
    inner_iterations: list  # per fixed-point step (N_si)
    update_residual: float
    amplitude: float
    retried: bool = False


@dataclass
class EnrichmentReport:
    modes: list = field(default_factory=list)
    wall_time: float = 0.0
    aborted: bool = False
    message: str = ""

    @property
    def n_modes(self) -> int:
        return len(self.modes)


# ---------------------------------------------------------------------------
# Galerkin coefficients


def x_norm(X, disc: DiscretizationSet) -> float:
    mx = disc.dg.apply_mass(X)
    return float(np.sqrt(np.einsum("t,tep,tep->", disc.angular.theta_weights, X, mx)))


def v_norm(V, velocity, delta_weights) -> float:
    V = np.asarray(V, dtype=float).reshape(-1, *velocity.shape)
    return float(np.sqrt(np.einsum("d,rz,drz->", delta_weights, velocity.weights, V * V)))


def mode_amplitude(X, V, disc: DiscretizationSet, delta_weights=None) -> float:
    """A = ||X|| ||V|| under the DG/angular and velocity(/delta) quadratures."""
    V = np.asarray(V, dtype=float).reshape(-1, disc.n_r, disc.n_z)
    if delta_weights is None:
        delta_weights = np.ones(len(V))
    return x_norm(X, disc) * v_norm(V, disc.velocity, delta_weights)


class _SpatialCache:
    """Per-mode products M X, W X and Y reused by the coefficient sums."""

    def __init__(self, disc: DiscretizationSet):
        self.disc = disc
        self.X, self.MX, self.WX, self.Y, self.MY = [], [], [], [], []

    def products(self, X):
        disc = self.disc
        mx = disc.dg.apply_mass(X)
        wx = disc.transport.apply(X)
        y = np.tensordot(disc.angular.theta_weights, X, axes=1)
        return mx, wx, y, disc.dg.apply_mass(y)

    def push(self, X):
        mx, wx, y, my = self.products(X)
        self.X.append(X)
        self.MX.append(mx)
        self.WX.append(wx)
        self.Y.append(y)
        self.MY.append(my)

    def row(self, X):
        """Coefficients of test function X against all stored modes and X itself."""
        w = self.disc.angular.theta_weights
        mx, wx, y, my = self.products(X)
        xs = self.X + [X]
        wxs = self.WX + [wx]
        ys = self.Y + [y]
        alpha = np.array([np.einsum("t,tep,tep->", w, xi, mx) for xi in xs])
        beta = np.array([np.einsum("t,tep,tep->", w, X, wxi) for wxi in wxs])
        gamma = np.array([np.sum(my * yi) for yi in ys])
        sigma = self.disc.dg.integrate(y)
        return alpha, beta, gamma, sigma

    def matrices(self):
        w = self.disc.angular.theta_weights
        m = len(self.X)
        alpha = np.empty((m, m))
        beta = np.empty((m, m))
        gamma = np.empty((m, m))
        for k in range(m):
            for i in range(m):
                alpha[k, i] = np.einsum("t,tep,tep->", w, self.X[k], self.MX[i])
                beta[k, i] = np.einsum("t,tep,tep->", w, self.X[k], self.WX[i])
                gamma[k, i] = np.sum(self.Y[k] * self.MY[i])
        sigma = np.array([self.disc.dg.integrate(y) for y in self.Y])
        return alpha, beta, gamma, sigma


def compute_spatial_coeffs(X_modes, k: int, disc: DiscretizationSet):
    """(alpha^k_i, beta^k_i, gamma^k_i for i < len(X_modes), sigma^k).

    beta uses the DG transport form, i.e. the volume term
    int X_k (b . grad X_i) plus upwind jump and wall-inflow terms.
    """
    m = len(X_modes)
    if not 0 <= k < m:
        raise ValueError(f"mode index {k} out of range for {m} modes")
    cache = _SpatialCache(disc)
    for i, x in enumerate(X_modes):
        if i != k:
            cache.push(np.asarray(x, dtype=float))
    alpha, beta, gamma, sigma = cache.row(np.asarray(X_modes[k], dtype=float))
    order = [i for i in range(m) if i != k] + [k]
    inv = np.argsort(order)
    return alpha[inv], beta[inv], gamma[inv], sigma


def compute_velocity_coeffs(V_m, V_modes, case: str, velocity):
    """(alpha_hat_i, beta_hat_i, gamma_hat, kappa_hat, sigma_hat) for V tables.

    ``V_m`` may carry a leading delta axis; results then do as well.
    """
    _check_case(case)
    w = velocity.weights
    vm = np.asarray(V_m, dtype=float)
    alpha = np.stack([np.sum(w * vm * np.asarray(v), axis=(-2, -1)) for v in V_modes], axis=-1) \
        if len(V_modes) else np.zeros(vm.shape[:-2] + (0,))
    beta = np.stack([np.sum(w * velocity.vr * vm * np.asarray(v), axis=(-2, -1)) for v in V_modes], axis=-1) \
        if len(V_modes) else np.zeros(vm.shape[:-2] + (0,))
    gamma = np.sum(w * velocity.vz * velocity.feq * vm, axis=(-2, -1))
    kappa = np.sum(w * velocity.heat * velocity.feq * vm, axis=(-2, -1))
    sigma = np.sum(w * velocity.source(case) * vm, axis=(-2, -1))
    return alpha, beta, gamma, kappa, sigma


def _measure_weights(delta_grid: DeltaGrid, measure: str) -> np.ndarray:
    if measure == "delta":
        return delta_grid.quad_weights
    if measure == "log":
        return delta_grid.delta_weights
    raise ValueError(f"measure must be 'delta' or 'log', got {measure!r}")


def compute_tilde_coeffs(V_m, V_modes, U_modes, Q_modes, case: str, velocity,
                         delta_grid: DeltaGrid, measure: str = "delta"):
    """delta-integrated coefficients (a_i, beta_i, gamma_i, kappa_i, sigma).

    a_i = int delta <V_m, V_i>, beta_i = int <v_r V_m, V_i>,
    gamma_i = int delta gamma_hat U_i, kappa_i = int delta kappa_hat Q_i and
    sigma = int sigma_hat, with the delta integral taken by the grid weights.
    """
    vm = np.asarray(V_m, dtype=float)
    nd = delta_grid.size
    if vm.shape != (nd,) + velocity.shape:
        raise ValueError(f"V_m of shape {vm.shape} does not match grids {(nd,) + velocity.shape}")
    for arr in list(U_modes) + list(Q_modes):
        if np.shape(arr) != (nd,):
            raise ValueError("U_i and Q_i must have one value per delta node")
    q = _measure_weights(delta_grid, measure)
    d = delta_grid.delta_nodes
    ah, bh, gh, kh, sh = compute_velocity_coeffs(vm, V_modes, case, velocity)
    a = np.einsum("d,di->i", q * d, ah)
    b = np.einsum("d,di->i", q, bh)
    g = np.array([np.sum(q * d * gh * np.asarray(u)) for u in U_modes])
    k = np.array([np.sum(q * d * kh * np.asarray(qq)) for qq in Q_modes])
    s = float(np.sum(q * sh))
    return a, b, g, k, s


# ---------------------------------------------------------------------------
# velocity-mode solves


def _moments(V, velocity):
    return (np.einsum("...rz,rz->...", V, velocity.weights * velocity.vz),
            np.einsum("...rz,rz->...", V, velocity.weights * velocity.heat))


def _collision_part(U, Q, velocity):
    """(2 U v_z + (4/15) Q v_z (v^2 - 5/2)) f_eq for U, Q of shape (Nd,)."""
    U = np.asarray(U, dtype=float)[..., None, None]
    Q = np.asarray(Q, dtype=float)[..., None, None]
    return (2.0 * U * velocity.vz + HEAT_COUPLING * Q * velocity.heat) * velocity.feq


def velocity_rhs_previous(alpha, beta, gamma, V_prev, deltas, velocity):
    """sum_{i<m} (delta alpha_i + v_r beta_i) V_i - delta gamma_i C(U_i, Q_i)."""
    d = np.asarray(deltas, dtype=float)[:, None, None]
    out = np.zeros((len(d),) + velocity.shape)
    for i, v in enumerate(V_prev):
        U, Q = _moments(v, velocity)
        out += (d * alpha[i] + velocity.vr * beta[i]) * v - d * gamma[i] * _collision_part(U, Q, velocity)
    return out


def solve_velocity_mode(m: int, alpha, beta, gamma, sigma, V_prev, case: str, deltas, velocity,
                        U_m=None, Q_m=None):
    """Pointwise solve of the velocity-mode equation for V_m (mode index m >= 1).

    (delta a_m + v_r b_m) V_m = delta g_m C(U_m, Q_m) - sigma s - prev. When
    ``U_m``/``Q_m`` are given they are used as lagged values; otherwise the
    moments of V_m itself are eliminated exactly through a 2x2 system per delta.
    Returns (V_m, U_m, Q_m) with a leading delta axis.
    """
    _check_case(case)
    if m < 1 or len(alpha) < m or len(V_prev) != m - 1:
        raise ValueError(f"inconsistent mode index {m} for {len(V_prev)} previous modes")
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    dd = d[:, None, None]
    a_m, b_m, g_m = alpha[m - 1], beta[m - 1], gamma[m - 1]
    pivot = dd * a_m + velocity.vr * b_m
    if np.min(np.abs(pivot)) < PIVOT_TOL:
        raise NearSingularError("vanishing pivot in velocity-mode solve", condition=np.inf)
    rest = -sigma * velocity.source(case) - velocity_rhs_previous(alpha, beta, gamma, V_prev, d, velocity)
    base = rest / pivot
    if U_m is None or Q_m is None:
        coef = dd * g_m * velocity.feq / pivot
        w = velocity.weights
        vz, psi = velocity.vz, velocity.heat
        a11 = 1 - 2 * np.sum(w * vz * vz * coef, axis=(1, 2))
        a12 = -HEAT_COUPLING * np.sum(w * vz * psi * coef, axis=(1, 2))
        a21 = -2 * np.sum(w * psi * vz * coef, axis=(1, 2))
        a22 = 1 - HEAT_COUPLING * np.sum(w * psi * psi * coef, axis=(1, 2))
        b1, b2 = _moments(base, velocity)
        det = a11 * a22 - a12 * a21
        if np.min(np.abs(det)) < PIVOT_TOL:
            raise NearSingularError("singular moment system in velocity-mode solve",
                                    condition=float(1 / max(np.min(np.abs(det)), 1e-300)))
        U_m = (b1 * a22 - a12 * b2) / det
        Q_m = (a11 * b2 - a21 * b1) / det
    V = dd * g_m * _collision_part(U_m, Q_m, velocity) / pivot + base
    U, Q = _moments(V, velocity)
    return V, U, Q


def velocity_mode_residual(m, alpha, beta, gamma, sigma, V_modes, case, deltas, velocity):
    """Pointwise residual of the velocity-mode equation for V_m, moments from V_m."""
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    return velocity_rhs_previous(alpha, beta, gamma, V_modes[:m], d, velocity) \
        + sigma * velocity.source(case)


def update_velocity_modes(alpha, beta, gamma, sigma, case: str, deltas, velocity):
    """Solve the coupled system for all V_i given all X_i (matrices alpha[k, i] ...).

    sum_i (delta a_ki + v_r b_ki) V_i - delta g_ki C(U_i, Q_i) = -sigma_k s,
    with U_i, Q_i eliminated exactly: a batched m x m solve per (delta, v_r)
    plus a 2m x 2m system per delta for the moments.
    """
    _check_case(case)
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    m = len(sigma)
    if m < 1:
        raise ValueError("need at least one mode")
    vr = velocity.r_nodes
    A = d[:, None, None, None] * alpha[None, None] + vr[None, :, None, None] * beta[None, None]
    cond = np.linalg.cond(A.reshape(-1, m, m))
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e14:
        raise NearSingularError("singular velocity-mode update system", condition=float(np.max(cond)))
    Ainv = np.linalg.inv(A)  # (Nd, Nr, m, m)
    w, vz, psi, feq = velocity.weights, velocity.vz, velocity.heat, velocity.feq
    s = velocity.source(case)
    # base solution: Ainv (-sigma s) -> (Nd, Nr, Nz, m)
    ainv_sig = Ainv @ (-sigma)  # (Nd, Nr, m)
    base = ainv_sig[:, :, None, :] * s[None, :, :, None]
    ainv_g = Ainv @ gamma  # (Nd, Nr, m, m)
    terms = {}
    for name, fa in (("z", vz), ("h", psi)):
        for nb, fb in (("z", vz), ("h", psi)):
            sab = np.sum(w * fa * fb * feq, axis=1)  # (Nr,)
            terms[name + nb] = d[:, None, None] * np.einsum("r,drij->dij", sab, ainv_g)
    big = np.zeros((len(d), 2 * m, 2 * m))
    big[:, :m, :m] = 2 * terms["zz"]
    big[:, :m, m:] = HEAT_COUPLING * terms["zh"]
    big[:, m:, :m] = 2 * terms["hz"]
    big[:, m:, m:] = HEAT_COUPLING * terms["hh"]
    lhs = np.eye(2 * m)[None] - big
    rhs = np.concatenate([np.einsum("rz,drzi->di", w * vz, base),
                          np.einsum("rz,drzi->di", w * psi, base)], axis=1)
    cond2 = np.linalg.cond(lhs)
    if not np.all(np.isfinite(cond2)) or np.max(cond2) > 1e14:
        raise NearSingularError("singular moment system in velocity-mode update",
                                condition=float(np.max(cond2)))
    uq = np.linalg.solve(lhs, rhs[..., None])[..., 0]
    U, Q = uq[:, :m], uq[:, m:]
    # V[d, r, z, :] = Ainv gamma (delta feq (2 vz U + 4/15 psi Q)) + base
    gu = np.einsum("drij,dj->dri", ainv_g, U)
    gq = np.einsum("drij,dj->dri", ainv_g, Q)
    V = (d[:, None, None, None] * feq[None, :, :, None]
         * (2 * vz[None, :, :, None] * gu[:, :, None, :] + HEAT_COUPLING * psi[None, :, :, None] * gq[:, :, None, :])
         + base)
    V_list = [np.ascontiguousarray(V[..., i]) for i in range(m)]
    return V_list, [_moments(v, velocity)[0] for v in V_list], [_moments(v, velocity)[1] for v in V_list]


def update_residual(alpha, beta, gamma, sigma, V_modes, case, deltas, velocity) -> float:
    """Max abs residual of the coupled velocity system over k and all nodes."""
    d = np.atleast_1d(np.asarray(deltas, dtype=float))
    s = velocity.source(case)
    worst = 0.0
    for k in range(len(V_modes)):
        r = velocity_rhs_previous(alpha[k], beta[k], gamma[k], V_modes, d, velocity) + sigma[k] * s
        worst = max(worst, float(np.max(np.abs(r))))
    return worst


# ---------------------------------------------------------------------------
# spatio-angular solves


@dataclass
class InnerSolveInfo:
    iterations: int
    converged: bool
    residual: float


def spatial_rhs(a, b, c, sigma, cache: _SpatialCache) -> np.ndarray:
    """Weak right-hand side -sigma M 1 - sum_{i<m} (b_i W + a_i M) X_i - c_i M Y_i."""
    dg = cache.disc.dg
    F = np.broadcast_to(-sigma * dg.apply_mass(np.ones(dg.shape)), (cache.disc.n_theta,) + dg.shape).copy()
    for i in range(len(cache.X)):
        F -= b[i] * cache.WX[i] + a[i] * cache.MX[i] - c[i] * cache.MY[i][None]
    return F


def spatial_residual(X, a, b, c, sigma, cache: _SpatialCache) -> np.ndarray:
    """Weak residual of the spatio-angular equation for X = X_m."""
    mx, wx, _, my = cache.products(X)
    return b[-1] * wx + a[-1] * mx - c[-1] * my[None] - spatial_rhs(a, b, c, sigma, cache)


def _dense_y_operator(disc: DiscretizationSet, fac, chunk: int = 128) -> np.ndarray:
    """Matrix of T: y -> sum_t dtheta_t S_t^-1 M y, one sweep per block of columns."""
    dg, op = disc.dg, disc.transport
    k, n_p = dg.shape
    n = k * n_p
    T = np.empty((n, n))
    for j0 in range(0, n, chunk):
        cols = np.arange(j0, min(n, j0 + chunk))
        e, p = np.divmod(cols, n_p)
        rhs = np.zeros((k, n_p, len(cols)))
        rhs[e, :, np.arange(len(cols))] = dg.mass[e, :, p]
        g = op.sweep(rhs[None, :, None], fac)[:, :, 0]
        T[:, cols] = np.tensordot(disc.angular.theta_weights, g, axes=1).reshape(n, -1)
    return T


def solve_spatio_angular_mode(a, b, c, sigma, cache: _SpatialCache, method: str = "direct",
                              tol: float = 1e-10, max_iter: int = 300, y0=None):
    """Solve (b_m W_t + a_m M) X - c_m M Y = F_t for X = X_m, Y = sum dtheta X.

    ``a, b, c`` hold the coefficients of modes 1..m (last entry = current
    mode); previous modes enter F. Eliminating X leaves (I - c_m T) Y = Y_F
    on the spatial nodes, with T the angle-averaged transport inverse.

    method: ``'direct'`` assembles I - c_m T column by column and uses a dense
    LU (cost independent of delta), ``'gmres'`` runs GMRES on Y and
    ``'source'`` the plain source iteration on Y. Returns the unnormalized
    X_m, its Y and an InnerSolveInfo counting the iterative steps on Y.
    """
    disc = cache.disc
    dg, op = disc.dg, disc.transport
    b_m, a_m, c_m = float(b[-1]), float(a[-1]), float(c[-1])
    if not b_m > 0:
        raise NearSingularError("transport coefficient of the spatio-angular mode is not positive",
                                condition=np.inf)
    if a_m < 0:
        raise NearSingularError("negative relaxation coefficient in spatio-angular solve",
                                condition=np.inf)
    fac = op.factorize([b_m], [a_m])
    wt = disc.angular.theta_weights
    F = spatial_rhs(a, b, c, sigma, cache)
    k, n_p = dg.shape
    n = k * n_p

    def solve_t(rhs_t):  # (Nt, K, Np) or (1, K, Np) -> (Nt, K, Np)
        return op.sweep(rhs_t[:, :, None, :, None], fac)[:, :, 0, :, 0]

    def apply_t(y):
        g = solve_t(dg.apply_mass(y.reshape(k, n_p))[None])
        return np.tensordot(wt, g, axes=1).ravel()

    x_f = solve_t(F)
    y_f = np.tensordot(wt, x_f, axes=1).ravel()
    if c_m == 0.0:
        return x_f, y_f.reshape(k, n_p), InnerSolveInfo(0, True, 0.0)

    count = [0]

    def mv(v):
        count[0] += 1
        return v - c_m * apply_t(v)

    if method == "direct":
        A = np.eye(n) - c_m * _dense_y_operator(disc, fac)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        d = np.abs(np.diag(lu))
        if not np.all(np.isfinite(lu)) or d.min() < PIVOT_TOL * d.max():
            raise NearSingularError("singular spatio-angular system",
                                    condition=float(d.max() / max(d.min(), 1e-300)))
        y = scipy.linalg.lu_solve((lu, piv), y_f, check_finite=False)
        converged, resid = True, 0.0
    elif method == "gmres":
        lin = LinearOperator((n, n), matvec=mv, dtype=float)
        x0 = None if y0 is None else np.asarray(y0, dtype=float).ravel()
        y, flag = gmres(lin, y_f, x0=x0, rtol=tol, atol=0.0, restart=60,
                        maxiter=max(1, max_iter // 60))
        converged = flag == 0
        n_used = count[0]
        resid = float(np.linalg.norm(y_f - mv(y)) / max(np.linalg.norm(y_f), 1e-300))
        count[0] = n_used
    elif method == "source":
        y = y_f if y0 is None else np.asarray(y0, dtype=float).ravel()
        converged = False
        resid = np.inf
        while count[0] < max_iter:
            count[0] += 1
            y_new = c_m * apply_t(y) + y_f
            resid = float(np.max(np.abs(y_new - y)) / max(np.max(np.abs(y_new)), 1e-300))
            y = y_new
            if resid < tol:
                converged = True
                break
    else:
        raise ValueError(f"unknown inner method {method!r}")
    x = c_m * solve_t(dg.apply_mass(y.reshape(k, n_p))[None]) + x_f
    return x, np.tensordot(wt, x, axes=1), InnerSolveInfo(count[0], bool(converged), float(resid))


# ---------------------------------------------------------------------------
# enrichment


def _initial_x(disc: DiscretizationSet, rng=None) -> np.ndarray:
    shape = (disc.n_theta,) + disc.dg.shape
    X = np.ones(shape) if rng is None else rng.standard_normal(shape) + 1.0
    return X / x_norm(X, disc)


def pgd_enrich_parametric(disc: DiscretizationSet, case: str, delta_grid: DeltaGrid,
                          M_md: int = 15, N_in: int = 10, tol: float = 1e-3, seed: int = 0,
                          measure: str = "delta", inner: str = "direct", inner_tol: float = 1e-10,
                          parametric: bool = True, callback=None):
    """Greedy enrichment with alternating fixed point; returns (PGDModeSet, EnrichmentReport)."""
    _check_case(case)
    if int(M_md) != M_md or M_md < 1:
        raise ValueError(f"M_md must be a positive integer, got {M_md!r}")
    if int(N_in) != N_in or N_in < 1:
        raise ValueError(f"N_in must be a positive integer, got {N_in!r}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    if np.any(delta_grid.delta_nodes < 0):
        raise ValueError("delta nodes must be non-negative")
    t0 = time.perf_counter()
    vel = disc.velocity
    deltas = delta_grid.delta_nodes
    qw = _measure_weights(delta_grid, measure)
    modes = PGDModeSet(disc, case, delta_grid, parametric=parametric, measure=measure)
    report = EnrichmentReport()
    cache = _SpatialCache(disc)
    V_prev, U_prev, Q_prev = [], [], []

    for m in range(1, int(M_md) + 1):
        record = None
        for attempt in range(2):
            rng = None if attempt == 0 else np.random.default_rng(seed + m)
            try:
                record, X = _enrich_one(m, disc, case, deltas, delta_grid, qw, measure, cache,
                                        V_prev, U_prev, Q_prev, _initial_x(disc, rng),
                                        N_in, tol, inner, inner_tol)
                record.retried = attempt == 1
                break
            except NumericalError as exc:
                last_exc = exc
        if record is None:
            report.aborted = True
            report.message = f"mode {m} failed twice: {last_exc}"
            break
        cache.push(X)
        alpha, beta, gamma, sigma = cache.matrices()
        try:
            V_prev, U_prev, Q_prev = update_velocity_modes(alpha, beta, gamma, sigma, case, deltas, vel)
        except NearSingularError as exc:
            cache.X.pop(), cache.MX.pop(), cache.WX.pop(), cache.Y.pop(), cache.MY.pop()
            report.aborted = True
            report.message = f"velocity update after mode {m} failed: {exc}"
            break
        record.update_residual = update_residual(alpha, beta, gamma, sigma, V_prev, case, deltas, vel)
        modes.X = list(cache.X)
        modes.V = list(V_prev)
        modes.amplitudes.append(record.amplitude)
        report.modes.append(record)
        if callback is not None:
            callback(m, record)
    report.wall_time = time.perf_counter() - t0
    if report.aborted and modes.n_modes == 0:
        raise ConvergenceError(report.message, partial=(modes, report))
    return modes, report


def _enrich_one(m, disc, case, deltas, delta_grid, qw, measure, cache, V_prev, U_prev, Q_prev,
                X, N_in, tol, inner, inner_tol):
    vel = disc.velocity
    alpha, beta, gamma, sigma = cache.row(X)
    V, _, _ = solve_velocity_mode(m, alpha, beta, gamma, sigma, V_prev, case, deltas, vel,
                                  U_m=np.zeros(len(deltas)), Q_m=np.zeros(len(deltas)))
    amp_prev = v_norm(V, vel, qw)
    history, inner_counts = [], []
    y_guess = None
    res = np.inf
    amp = amp_prev
    itr = 0
    while itr < N_in:
        itr += 1
        alpha, beta, gamma, sigma = cache.row(X)
        V, U, Q = solve_velocity_mode(m, alpha, beta, gamma, sigma, V_prev, case, deltas, vel)
        a, b, g, k, s = compute_tilde_coeffs(V, V_prev + [V], U_prev + [U], Q_prev + [Q],
                                             case, vel, delta_grid, measure)
        c = 2 * g + HEAT_COUPLING * k
        X_un, y_un, info = solve_spatio_angular_mode(a, b, c, s, cache, method=inner,
                                                     tol=inner_tol, y0=y_guess)
        inner_counts.append(info.iterations)
        nx = x_norm(X_un, disc)
        if not np.isfinite(nx) or nx == 0.0:
            raise NearSingularError("spatio-angular mode vanished", condition=np.inf)
        y_guess = y_un
        amp = nx * v_norm(V, vel, qw)
        X = X_un / nx
        res = abs(amp - amp_prev) / max(amp_prev, 1e-300)
        history.append(float(res))
        amp_prev = amp
        if res < tol:
            break
    return ModeRecord(itr, float(res), history, inner_counts, np.nan, float(amp)), X


def pgd_enrich(disc: DiscretizationSet, case: str, delta: float, **kwargs):
    """Single-delta enrichment; see :func:`pgd_enrich_parametric`."""
    if not np.isfinite(delta) or delta < 0:
        raise ValueError(f"delta must be finite and non-negative, got {delta!r}")
    return pgd_enrich_parametric(disc, case, DeltaGrid.single(delta), parametric=False, **kwargs)


# ---------------------------------------------------------------------------
# reconstruction and queries


class ModeInterpolator:
    """Monotone cubic interpolation of U_i, Q_i (and V_i) in ln(delta)."""

    def __init__(self, modes: PGDModeSet):
        self.modes = modes
        self.nodes = modes.delta_grid.delta_nodes
        self.int_y = np.array([modes.disc.dg.integrate(y) for y in modes.Y])
        U = np.array(modes.U).reshape(modes.n_modes, -1)
        Q = np.array(modes.Q).reshape(modes.n_modes, -1)
        self._single = len(self.nodes) == 1
        if not self._single and modes.n_modes:
            x = np.log(self.nodes)
            self._u = PchipInterpolator(x, U, axis=1)
            self._q = PchipInterpolator(x, Q, axis=1)
        self._U, self._Q = U, Q

    def check(self, delta):
        d = np.asarray(delta, dtype=float)
        lo, hi = self.nodes[0], self.nodes[-1]
        bad = d[(d < lo * (1 - 1e-12)) | (d > hi * (1 + 1e-12)) | ~np.isfinite(d)]
        if bad.size:
            raise OutOfRangeError(f"delta={bad.flat[0]!r} outside the valid range [{lo}, {hi}]")
        return d

    def UQ(self, delta):
        """U_i(delta), Q_i(delta), arrays (m, ...)."""
        m = self.modes.n_modes
        if self._single:
            d = self.check(delta)
            return (self._U[:, 0].reshape((m,) + (1,) * d.ndim) * np.ones(d.shape),
                    self._Q[:, 0].reshape((m,) + (1,) * d.ndim) * np.ones(d.shape))
        d = self.check(delta)
        if m == 0:
            return np.zeros((0,) + d.shape), np.zeros((0,) + d.shape)
        x = np.log(np.clip(d, self.nodes[0], self.nodes[-1]))
        return self._u(x), self._q(x)

    def flow_rates(self, delta):
        """(integral of u, integral of q) at delta (scalar or array)."""
        U, Q = self.UQ(delta)
        return np.tensordot(self.int_y, U, axes=1), np.tensordot(self.int_y, Q, axes=1)

    def G_P(self, delta):
        return -2.0 * self.flow_rates(delta)[0]

    def G_T(self, delta):
        return 2.0 * self.flow_rates(delta)[1]

    def V(self, delta) -> list:
        d = float(self.check(delta))
        if self._single:
            return [v[0] for v in self.modes.V]
        x = np.log(np.clip(d, self.nodes[0], self.nodes[-1]))
        return [PchipInterpolator(np.log(self.nodes), v, axis=0)(x) for v in self.modes.V]


def _resolve_delta(modes: PGDModeSet, delta):
    if delta is None:
        if modes.parametric:
            raise ValueError("a delta value is required for a parametric mode set")
        return float(modes.delta_grid.delta_nodes[0])
    return float(delta)


def reconstruct_macro(modes: PGDModeSet, delta=None) -> MacroFields:
    """u = sum Y_i U_i and q = sum Y_i Q_i, plus flow rates for case P."""
    dg = modes.disc.dg
    d = _resolve_delta(modes, delta)
    u = np.zeros(dg.shape)
    q = np.zeros(dg.shape)
    if modes.n_modes:
        U, Q = ModeInterpolator(modes).UQ(d)
        for y, ui, qi in zip(modes.Y, U, Q):
            u = u + y * float(ui)
            q = q + y * float(qi)
    macro = MacroFields(u, q, d, modes.case)
    if modes.case == "P":
        macro.G_P = flow_rate_GP(macro, dg)
        macro.G_T = flow_rate_GT(macro, dg)
    return macro


def reconstruct_h(modes: PGDModeSet, x: float, y: float, theta: float, v_r: float, v_z: float,
                  delta=None) -> float:
    """Point value of sum X_i V_i: DG interpolation in space, nearest grid node in angle and velocity."""
    disc = modes.disc
    d = _resolve_delta(modes, delta)
    if disc.mesh.locate(x, y) < 0:
        raise OutOfRangeError(f"point ({x}, {y}) lies outside the domain")
    th = np.mod(theta, 2 * np.pi)
    gap = np.abs(np.angle(np.exp(1j * (disc.angular.theta_nodes - th))))
    t = int(np.argmin(gap))
    j1 = int(np.argmin(np.abs(disc.velocity.r_nodes - v_r)))
    j2 = int(np.argmin(np.abs(disc.velocity.z_nodes - v_z)))
    Vs = ModeInterpolator(modes).V(d) if modes.n_modes else []
    total = 0.0
    for X, V in zip(modes.X, Vs):
        total += float(disc.dg.evaluate(X[t], x, y)) * float(V[j1, j2])
    return total


def reconstruct_h_nodes(modes: PGDModeSet, delta=None) -> np.ndarray:
    """Dense h on (element, node, v_r, theta, v_z) at the grid nodes."""
    d = _resolve_delta(modes, delta)
    disc = modes.disc
    out = np.zeros((*disc.dg.shape, disc.n_r, disc.n_theta, disc.n_z))
    if modes.n_modes:
        for X, V in zip(modes.X, ModeInterpolator(modes).V(d)):
            out += np.einsum("tep,rz->eprtz", X, V)
    return out


# ---------------------------------------------------------------------------
# persistence


def save_modes(modes: PGDModeSet, path) -> None:
    """Container: JSON header (case, grid parameters, m), mesh tables, delta grid, X then V stacks."""
    disc = modes.disc
    header = {
        "version": FORMAT_VERSION, "case": modes.case, "m": modes.n_modes,
        "parametric": modes.parametric, "measure": modes.measure,
        "p": disc.dg.order, "N_theta": disc.n_theta, "domain": disc.mesh.domain_tag,
        **disc.velocity.params(),
    }
    nt, (k, n_p), nd = disc.n_theta, disc.dg.shape, modes.delta_grid.size
    X = np.array(modes.X) if modes.n_modes else np.zeros((0, nt, k, n_p))
    V = np.array(modes.V) if modes.n_modes else np.zeros((0, nd, disc.n_r, disc.n_z))
    write_container(path, MODES_KIND, header, {
        "vertices": disc.mesh.vertices, "triangles": disc.mesh.triangles,
        "delta_nodes": modes.delta_grid.delta_nodes, "delta_weights": modes.delta_grid.delta_weights,
        "quad_weights": modes.delta_grid.quad_weights,
        "amplitudes": np.array(modes.amplitudes, dtype=float), "X": X, "V": V,
    })


def load_modes(path, disc: DiscretizationSet | None = None) -> PGDModeSet:
    header, data = read_container(path, MODES_KIND)
    if disc is None:
        disc = disc_from_header(header, data)
    grid = DeltaGrid(data["delta_nodes"], data["delta_weights"], data["quad_weights"])
    X = [x.copy() for x in data["X"]]
    V = [v.copy() for v in data["V"]]
    amps = [float(a) for a in data["amplitudes"]]
    if len(X) != header["m"] or len(V) != header["m"]:
        raise ValueError(f"{path}: mode count does not match header")
    return PGDModeSet(disc, header["case"], grid, X, V, amps, bool(header["parametric"]), header["measure"])


def disc_from_header(header: dict, data: dict) -> DiscretizationSet:
    mesh = TriMesh(data["vertices"], data["triangles"], header["domain"])
    return build_discretization(mesh, header["p"], header["N_r"], header["N_z"],
                                header["v_max"], header["stretch"], header["N_theta"])
