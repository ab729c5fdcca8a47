"""Velocity, angular and rarefaction-parameter grids with quadrature weights."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PI_M32 = np.pi ** -1.5


def equilibrium_feq(v_r, v_z):
    """Dimensionless global equilibrium pi^(-3/2) exp(-(v_r^2 + v_z^2))."""
    return PI_M32 * np.exp(-(np.asarray(v_r) ** 2 + np.asarray(v_z) ** 2))


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class VelocityGrid:
    """Midpoint grid in (v_r, v_z).

    ``weights[j1, j2]`` already contains the cylindrical Jacobian v_r, so
    ``sum(weights * g) * 2*pi`` approximates the integral of an axisymmetric
    g over velocity space.
    """

    r_nodes: np.ndarray
    z_nodes: np.ndarray
    weights: np.ndarray
    v_max: float
    stretch: float
    feq: np.ndarray = field(init=False, repr=False)
    vr: np.ndarray = field(init=False, repr=False)
    vz: np.ndarray = field(init=False, repr=False)
    heat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vr, vz = np.meshgrid(self.r_nodes, self.z_nodes, indexing="ij")
        heat = vz * (vr**2 + vz**2 - 2.5)
        feq = equilibrium_feq(vr, vz)
        _frozen(vr, vz, heat, feq)
        object.__setattr__(self, "vr", vr)
        object.__setattr__(self, "vz", vz)
        object.__setattr__(self, "heat", heat)
        object.__setattr__(self, "feq", feq)

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def source(self, case: str) -> np.ndarray:
        """Driving term s_P = v_z f_eq or s_T = v_z (v^2 - 5/2) f_eq."""
        if case == "P":
            return self.vz * self.feq
        if case == "T":
            return self.heat * self.feq
        raise ValueError(f"case must be 'P' or 'T', got {case!r}")

    def params(self) -> dict:
        n_r, n_z = self.shape
        return {"N_r": n_r, "N_z": n_z, "v_max": self.v_max, "stretch": self.stretch}


@dataclass(frozen=True, eq=False)
class AngularGrid:
    theta_nodes: np.ndarray
    theta_weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.theta_nodes)

    @property
    def directions(self) -> np.ndarray:
        return np.stack([np.cos(self.theta_nodes), np.sin(self.theta_nodes)], axis=1)


@dataclass(frozen=True, eq=False)
class DeltaGrid:
    """Nodes in the rarefaction parameter.

    ``delta_weights`` are composite Simpson weights in ln(delta);
    ``quad_weights`` integrate in delta itself, i.e. include the Jacobian.
    """

    delta_nodes: np.ndarray
    delta_weights: np.ndarray
    quad_weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.delta_nodes)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.delta_nodes[0]), float(self.delta_nodes[-1])

    @classmethod
    def single(cls, delta: float) -> "DeltaGrid":
        one = np.ones(1)
        nodes = np.array([float(delta)])
        _frozen(nodes, one)
        return cls(nodes, one, one)


def _stretched_edges(n: int, v_max: float, stretch: float, symmetric: bool) -> np.ndarray:
    if symmetric:
        t = np.linspace(-1.0, 1.0, n + 1)
        return v_max * np.sign(t) * np.abs(t) ** stretch
    return v_max * np.linspace(0.0, 1.0, n + 1) ** stretch


def build_velocity_grid(N_r: int = 24, N_z: int = 24, v_max: float = 4.0,
                        stretch: float = 2.0) -> VelocityGrid:
    """Midpoint cells with edges v_max * (k/N)**stretch, clustered at v = 0."""
    if int(N_r) != N_r or int(N_z) != N_z or N_r < 4 or N_z < 4:
        raise ValueError(f"N_r and N_z must be integers >= 4, got {N_r!r}, {N_z!r}")
    if not v_max > 0:
        raise ValueError(f"v_max must be positive, got {v_max!r}")
    if not stretch >= 1:
        raise ValueError(f"stretch must be >= 1, got {stretch!r}")
    er = _stretched_edges(int(N_r), v_max, stretch, symmetric=False)
    ez = _stretched_edges(int(N_z), v_max, stretch, symmetric=True)
    r = 0.5 * (er[1:] + er[:-1])
    z = 0.5 * (ez[1:] + ez[:-1])
    z = 0.5 * (z - z[::-1])  # exact mirror symmetry
    dz = np.diff(ez)
    dz = 0.5 * (dz + dz[::-1])
    w = (r * np.diff(er))[:, None] * dz[None, :]
    _frozen(r, z, w)
    return VelocityGrid(r, z, w, float(v_max), float(stretch))


def build_angular_grid(N_theta: int = 48) -> AngularGrid:
    if int(N_theta) != N_theta or N_theta < 4 or N_theta % 2:
        raise ValueError(f"N_theta must be an even integer >= 4, got {N_theta!r}")
    n = int(N_theta)
    theta = (np.arange(1, n + 1) - 0.5) * 2 * np.pi / n
    w = np.full(n, 2 * np.pi / n)
    _frozen(theta, w)
    return AngularGrid(theta, w)


def build_delta_grid(N_delta: int = 33, delta_min: float = 0.01,
                     delta_max: float = 100.0) -> DeltaGrid:
    """Log-uniform nodes with composite Simpson weights in ln(delta)."""
    if int(N_delta) != N_delta or N_delta < 3 or N_delta % 2 == 0:
        raise ValueError(f"N_delta must be an odd integer >= 3, got {N_delta!r}")
    if not 0 < delta_min < delta_max:
        raise ValueError(f"need 0 < delta_min < delta_max, got {delta_min!r}, {delta_max!r}")
    n = int(N_delta)
    lo, hi = np.log(delta_min), np.log(delta_max)
    t = np.linspace(lo, hi, n)
    nodes = np.exp(t)
    nodes[0], nodes[-1] = delta_min, delta_max
    h = (hi - lo) / (n - 1)
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= h / 3
    q = w * nodes
    _frozen(nodes, w, q)
    return DeltaGrid(nodes, w, q)
