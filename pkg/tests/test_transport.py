import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rarefied_pgd.dg import build_dg_space
from rarefied_pgd.mesh import generate_disk_mesh, generate_square_mesh
from rarefied_pgd.transport import UpwindTransport, dg_transport_solve


@pytest.fixture(scope="module")
def dg():
    return build_dg_space(generate_square_mesh(3), 2)


def test_zero_rhs_gives_zero(dg):
    g = dg_transport_solve(dg, (np.cos(0.4), np.sin(0.4)), 1.0, 2.0, np.zeros(dg.shape))
    assert np.array_equal(g, np.zeros(dg.shape))


@pytest.mark.parametrize("theta", [0.0, 0.3, 1.9, 3.5, 5.0])
def test_linear_manufactured_solution_is_exact(theta):
    # g* = x with inflow data g*; exact in any space of degree >= 1
    dg1 = build_dg_space(generate_disk_mesh(3), 1)
    vr, delta = 0.7, 1.3
    rhs = lambda x, y: vr * np.cos(theta) + delta * x
    g = dg_transport_solve(dg1, (np.cos(theta), np.sin(theta)), vr, delta, rhs, inflow=lambda x, y: x)
    assert np.max(np.abs(g - dg1.x)) < 1e-10


def test_linear_manufactured_solution_with_zero_inflow(dg):
    # direction (1, 0): inflow is x = -1/2, where g* = x + 1/2 vanishes
    vr, delta = 0.9, 0.6
    rhs = lambda x, y: vr + delta * (x + 0.5)
    g = dg_transport_solve(dg, (1.0, 0.0), vr, delta, rhs)
    assert np.max(np.abs(g - (dg.x + 0.5))) < 1e-10


def test_pure_advection_from_inflow(dg):
    vr = 1.7
    g = dg_transport_solve(dg, (1.0, 0.0), vr, 0.0, lambda x, y: vr + 0 * x)
    assert np.max(np.abs(g - (dg.x + 0.5))) < 1e-10


@pytest.mark.parametrize("p", [1, 2, 3])
def test_manufactured_convergence_rate(p):
    theta, vr, delta = 0.7, 1.3, 0.8
    b = np.array([np.cos(theta), np.sin(theta)])
    k = p + 1
    exact = lambda x, y: (0.3 + x + 0.5 * y) ** k
    rhs = lambda x, y: vr * k * (0.3 + x + 0.5 * y) ** (k - 1) * (b[0] + 0.5 * b[1]) + delta * exact(x, y)
    errors = []
    for n in (2, 4, 8):
        space = build_dg_space(generate_square_mesh(n), p)
        e = dg_transport_solve(space, b, vr, delta, rhs, inflow=exact) - space.interpolate(exact)
        errors.append(np.sqrt(space.inner(e, e)))
    ratios = np.array(errors[:-1]) / np.array(errors[1:])
    assert np.all(ratios >= 2**p)


def test_cached_and_uncached_factorizations_agree(dg, rng):
    op = UpwindTransport(dg, np.stack([np.cos([0.2, 2.5]), np.sin([0.2, 2.5])], axis=1))
    rhs = rng.standard_normal((2, dg.n_elements, 1, dg.n_p, 3))
    a = op.sweep(rhs, op.factorize([0.5, 2.0], [1.0, 0.1]))
    b = op.sweep(rhs, op.factorize([0.5, 2.0], [1.0, 0.1], cache=False))
    assert np.max(np.abs(a - b)) < 1e-10 * np.max(np.abs(a))


def test_apply_inverts_sweep(dg, rng):
    dirs = np.stack([np.cos([0.1, 1.0, 4.0]), np.sin([0.1, 1.0, 4.0])], axis=1)
    op = UpwindTransport(dg, dirs)
    f = rng.standard_normal((3,) + dg.shape)
    g = op.sweep(f[:, :, None, :, None], op.factorize([1.0], [0.0]))[:, :, 0, :, 0]
    assert np.max(np.abs(op.apply(g) - f)) < 1e-9 * np.max(np.abs(f))


@settings(max_examples=15, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(0.05, 5.0), st.floats(0.0, 50.0), st.floats(-3, 3))
def test_sweep_is_linear(theta, vr, delta, scale):
    space = build_dg_space(generate_square_mesh(2), 2)
    r = np.random.default_rng(0)
    f1, f2 = r.standard_normal(space.shape), r.standard_normal(space.shape)
    d = (np.cos(theta), np.sin(theta))
    g1 = dg_transport_solve(space, d, vr, delta, f1)
    g2 = dg_transport_solve(space, d, vr, delta, f2)
    g = dg_transport_solve(space, d, vr, delta, f1 + scale * f2)
    assert np.max(np.abs(g - g1 - scale * g2)) < 1e-9 * max(1.0, np.max(np.abs(g)))


def test_rejects_bad_arguments(dg):
    with pytest.raises(ValueError):
        dg_transport_solve(dg, (1.0, 0.0), 0.0, 1.0, np.zeros(dg.shape))
    with pytest.raises(ValueError):
        dg_transport_solve(dg, (1.0, 0.0), 1.0, -1.0, np.zeros(dg.shape))
    bad = np.zeros(dg.shape)
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        dg_transport_solve(dg, (1.0, 0.0), 1.0, 1.0, bad)
