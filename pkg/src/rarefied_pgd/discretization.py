"""Bundle of mesh, DG space and velocity/angle grids shared by the solvers."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dg import DGSpace, build_dg_space
from .grids import AngularGrid, VelocityGrid, build_angular_grid, build_velocity_grid
from .mesh import TriMesh, make_mesh
from .transport import UpwindTransport

REFERENCE_RESOLUTION = dict(p=3, N_r=24, N_z=24, v_max=4.0, stretch=2.0, N_theta=48)
COARSE_RESOLUTION = dict(p=2, N_r=16, N_z=16, v_max=4.0, stretch=2.0, N_theta=24)
DEFAULT_REFINEMENT = {"square": 8, "trapezoid": 8, "circle": 11}
COARSE_REFINEMENT = {"square": 4, "trapezoid": 4, "circle": 4}


@dataclass(eq=False)
class DiscretizationSet:
    mesh: TriMesh
    dg: DGSpace
    velocity: VelocityGrid
    angular: AngularGrid
    meta: dict = field(default_factory=dict)

    @cached_property
    def transport(self) -> UpwindTransport:
        return UpwindTransport(self.dg, self.angular.directions)

    @property
    def n_r(self) -> int:
        return self.velocity.shape[0]

    @property
    def n_z(self) -> int:
        return self.velocity.shape[1]

    @property
    def n_theta(self) -> int:
        return self.angular.size

    def params(self) -> dict:
        out = {"p": self.dg.order, "N_theta": self.n_theta, "n_elements": self.mesh.n_elements}
        out.update(self.velocity.params())
        out.update(self.meta)
        return out

    def same_grids(self, other: "DiscretizationSet") -> bool:
        return (
            self.dg.shape == other.dg.shape
            and self.velocity.shape == other.velocity.shape
            and self.n_theta == other.n_theta
            and np.array_equal(self.mesh.vertices, other.mesh.vertices)
            and np.array_equal(self.mesh.triangles, other.mesh.triangles)
            and np.array_equal(self.velocity.r_nodes, other.velocity.r_nodes)
            and np.array_equal(self.velocity.z_nodes, other.velocity.z_nodes)
        )


def build_discretization(mesh: TriMesh, p: int = 3, N_r: int = 24, N_z: int = 24,
                         v_max: float = 4.0, stretch: float = 2.0,
                         N_theta: int = 48) -> DiscretizationSet:
    return DiscretizationSet(
        mesh=mesh,
        dg=build_dg_space(mesh, p),
        velocity=build_velocity_grid(N_r, N_z, v_max, stretch),
        angular=build_angular_grid(N_theta),
        meta={"domain": mesh.domain_tag},
    )


def preset(domain: str = "square", coarse: bool = False) -> DiscretizationSet:
    """Default (``coarse=False``) or CI-sized discretization of a canonical domain."""
    refinement = (COARSE_REFINEMENT if coarse else DEFAULT_REFINEMENT)[domain]
    res = COARSE_RESOLUTION if coarse else REFERENCE_RESOLUTION
    disc = build_discretization(make_mesh(domain, refinement), **res)
    disc.meta["refinement"] = refinement
    return disc
