"""SVD reference amplitudes, error fields, TPD coefficients and CSV export."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import OutOfRangeError

TPD_STEPS = 2000
MASK_FRACTION = 1e-12


@dataclass
class SvdAmplitudes:
    singular_values: np.ndarray
    relative_amplitudes: np.ndarray


def svd_amplitudes(h) -> SvdAmplitudes:
    """Singular values of h unfolded as (element, node, theta) x (v_r, v_z).

    Accepts a DistributionField, a dense array (K, Np, N_r, N_theta, N_z) or
    an already unfolded matrix.
    """
    if hasattr(h, "unfolding"):
        mat = h.unfolding()
    else:
        a = np.asarray(h, dtype=float)
        if a.ndim == 5:
            k, n_p, n_r, n_t, n_z = a.shape
            mat = a.transpose(0, 1, 3, 2, 4).reshape(k * n_p * n_t, n_r * n_z)
        elif a.ndim == 2:
            mat = a
        else:
            raise ValueError(f"expected a 2-D or 5-D array, got shape {a.shape}")
    s = scipy.linalg.svdvals(mat)
    rel = s / s[0] if s.size and s[0] > 0 else np.zeros_like(s)
    return SvdAmplitudes(s, rel)


def pgd_relative_amplitudes(modes, delta=None):
    """(||Y_i|| |U_i| / ||Y_1|| |U_1|, same for Q) for each PGD mode."""
    from .pgd import ModeInterpolator

    if modes.n_modes == 0:
        return np.zeros(0), np.zeros(0)
    dg = modes.disc.dg
    d = float(modes.delta_grid.delta_nodes[0]) if delta is None else float(delta)
    U, Q = ModeInterpolator(modes).UQ(d)
    ny = np.array([np.sqrt(dg.inner(y, y)) for y in modes.Y])
    au = ny * np.abs(U)
    aq = ny * np.abs(Q)
    return au / au[0], aq / aq[0]


def relative_error_field(u_pgd, u_full) -> np.ndarray:
    """|u_pgd - u_full| / |u_full| per node; NaN where |u_full| is negligible."""
    a = np.asarray(u_pgd, dtype=float)
    b = np.asarray(u_full, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"field shapes differ: {a.shape} vs {b.shape}")
    scale = np.abs(b)
    mask = scale < MASK_FRACTION * np.max(scale) if scale.size else scale.astype(bool)
    out = np.full(a.shape, np.nan)
    ok = ~mask & (scale > 0)
    out[ok] = np.abs(a[ok] - b[ok]) / scale[ok]
    return out


@dataclass
class TpdResult:
    delta_1: float
    temperature_ratio: float
    pressure_ratio: float
    eta: float


def tpd_solve(G_P, G_T, delta_1: float, temp_ratio: float, n_steps: int = TPD_STEPS,
              delta_range=None) -> TpdResult:
    """Integrate dP/dT = (P/T) G_T(delta)/G_P(delta), delta = delta_1 P/T, by RK4.

    ``G_P`` and ``G_T`` are callables of delta. ``delta_range`` (lo, hi), when
    given, is checked before every evaluation.
    """
    if not temp_ratio > 1:
        raise ValueError(f"temperature ratio must exceed 1, got {temp_ratio!r}")
    if not delta_1 > 0:
        raise ValueError(f"delta_1 must be positive, got {delta_1!r}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps!r}")

    def rate(T, P):
        delta = delta_1 * P / T
        if delta_range is not None and not delta_range[0] * (1 - 1e-12) <= delta <= delta_range[1] * (1 + 1e-12):
            raise OutOfRangeError(
                f"delta={delta!r} outside the valid range [{delta_range[0]}, {delta_range[1]}]")
        gp = float(G_P(delta))
        if gp == 0:
            raise ZeroDivisionError(f"G_P vanishes at delta={delta!r}")
        return P / T * float(G_T(delta)) / gp

    h = (temp_ratio - 1.0) / int(n_steps)
    T, P = 1.0, 1.0
    for i in range(int(n_steps)):
        T = 1.0 + i * h
        k1 = rate(T, P)
        k2 = rate(T + h / 2, P + h / 2 * k1)
        k3 = rate(T + h / 2, P + h / 2 * k2)
        k4 = rate(T + h, P + h * k3)
        P += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    eta = float(np.log(P) / np.log(temp_ratio))
    return TpdResult(float(delta_1), float(temp_ratio), float(temp_ratio) ** eta, eta)


def hydraulic_diameter(mesh) -> float:
    """4 A / perimeter of a mesh cross section."""
    perimeter = sum(e.length for e in mesh.boundary_edges)
    return 4.0 * mesh.area / perimeter


def export_field(values, dg, path, meta: dict | None = None) -> None:
    """CSV with columns x, y, value; element-major, node-minor row order."""
    v = np.asarray(values, dtype=float)
    if v.shape != dg.shape:
        raise ValueError(f"field of shape {v.shape} does not match DG space {dg.shape}")
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            for key, val in (meta or {}).items():
                fh.write(f"# {key}={val}\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "value"])
            for x, y, f in zip(dg.x.ravel(), dg.y.ravel(), v.ravel()):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(f))])
    except OSError as exc:
        raise OSError(f"cannot write field to {path}: {exc}") from exc


def import_field(path):
    """Read a CSV written by :func:`export_field`; returns (xy, values, meta)."""
    meta = {}
    rows = []
    path = Path(path)
    with path.open() as fh:
        lines = [ln for ln in fh]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            meta[key] = val
        else:
            body.append(ln)
    reader = csv.reader(body)
    header = next(reader, None)
    if header != ["x", "y", "value"]:
        raise ValueError(f"{path}: unexpected header {header!r}")
    for row in reader:
        rows.append([float(c) for c in row])
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return arr[:, :2], arr[:, 2], meta
