import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import cached_full_rank, coarse_vademecum, tiny_disc
from rarefied_pgd.dg import build_dg_space
from rarefied_pgd.errors import OutOfRangeError
from rarefied_pgd.mesh import (generate_square_mesh, generate_trapezoid_mesh, trapezoid_area,
                               trapezoid_height)
from rarefied_pgd.pgd import ModeInterpolator
from rarefied_pgd.postprocess import (export_field, hydraulic_diameter, import_field,
                                      relative_error_field, svd_amplitudes, tpd_solve)

# ---------------------------------------------------------------------------
# SVD amplitudes


def test_rank_one_unfolding():
    a, b = np.arange(1.0, 7.0), np.array([2.0, -1.0, 0.5])
    res = svd_amplitudes(np.outer(a, b))
    assert res.singular_values[0] == pytest.approx(np.linalg.norm(a) * np.linalg.norm(b), rel=1e-13)
    assert np.all(res.relative_amplitudes[1:] < 1e-14)


def test_singular_values_match_gram_eigenvalues(rng):
    m = rng.standard_normal((40, 9))
    ref = np.sqrt(np.sort(np.linalg.eigvalsh(m.T @ m))[::-1])
    assert np.allclose(svd_amplitudes(m).singular_values, ref, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(-10, 10)))
def test_relative_amplitudes_non_increasing(m):
    rel = svd_amplitudes(m).relative_amplitudes
    assert np.all(np.diff(rel) <= 1e-12)
    if np.any(m):
        assert rel[0] == pytest.approx(1.0)


def test_dense_unfolding_ignores_direction_order(rng):
    h = rng.standard_normal((3, 4, 5, 6, 2))
    perm = rng.permutation(6)
    a = svd_amplitudes(h).singular_values
    b = svd_amplitudes(h[:, :, :, perm]).singular_values
    assert np.allclose(a, b, rtol=1e-12)


def test_factored_and_dense_fields_agree():
    h, _, _ = cached_full_rank("tiny", "P", 1.0)
    a = svd_amplitudes(h).singular_values
    b = svd_amplitudes(h.values).singular_values
    assert np.allclose(a, b, rtol=1e-10, atol=1e-12 * a[0])


def test_svd_rejects_bad_rank():
    with pytest.raises(ValueError):
        svd_amplitudes(np.zeros((2, 2, 2)))


# ---------------------------------------------------------------------------
# error fields


def test_identical_fields_have_zero_error(rng):
    u = rng.standard_normal((4, 6)) + 3
    assert np.all(relative_error_field(u, u) == 0)


def test_uniform_three_percent_error(rng):
    u = rng.uniform(0.5, 2.0, (5, 3))
    assert np.allclose(relative_error_field(1.03 * u, u), 0.03, rtol=1e-12)


def test_negligible_reference_values_are_masked():
    ref = np.array([1.0, 0.0, 1e-15, -2.0])
    err = relative_error_field(ref + 0.1, ref)
    assert np.isnan(err[1]) and np.isnan(err[2])
    assert err[0] == pytest.approx(0.1) and err[3] == pytest.approx(0.05)


def test_error_field_shape_mismatch():
    with pytest.raises(ValueError):
        relative_error_field(np.zeros(3), np.zeros(4))


# ---------------------------------------------------------------------------
# thermomolecular pressure difference


@pytest.mark.parametrize("r", [0.05, 0.25, 0.5])
def test_constant_ratio_closed_form(r):
    res = tpd_solve(lambda d: 2.0, lambda d: 2.0 * r, 0.7, 3.8)
    assert res.eta == pytest.approx(r, abs=1e-8)
    assert res.pressure_ratio == pytest.approx(3.8**res.eta, rel=1e-12)


def smooth_tables():
    # ratio decreasing in delta, between 1/2 and 0
    return (lambda d: 1 + d), (lambda d: 0.5 / (1 + d))


def test_step_halving_converged():
    gp, gt = smooth_tables()
    a = tpd_solve(gp, gt, 1.0, 3.8, n_steps=2000).eta
    b = tpd_solve(gp, gt, 1.0, 3.8, n_steps=4000).eta
    assert abs(a - b) < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.floats(1e-3, 50), st.floats(1.01, 3))
def test_eta_non_increasing_in_inlet_rarefaction(d, factor):
    gp, gt = smooth_tables()
    lo = tpd_solve(gp, gt, d, 3.8, n_steps=200).eta
    hi = tpd_solve(gp, gt, d * factor, 3.8, n_steps=200).eta
    assert hi <= lo + 1e-12
    assert 0 < hi <= 0.5


def test_range_check_on_path():
    gp, gt = smooth_tables()
    with pytest.raises(OutOfRangeError, match="valid range"):
        tpd_solve(gp, gt, 0.011, 3.8, delta_range=(0.01, 100))


@pytest.mark.parametrize("kwargs", [{"temp_ratio": 1.0}, {"delta_1": 0.0}, {"n_steps": 0}])
def test_tpd_rejects_bad_arguments(kwargs):
    gp, gt = smooth_tables()
    args = {"G_P": gp, "G_T": gt, "delta_1": 1.0, "temp_ratio": 3.8} | kwargs
    with pytest.raises(ValueError):
        tpd_solve(**args)


def test_trapezoid_hydraulic_diameter():
    mesh = generate_trapezoid_mesh(4)
    assert hydraulic_diameter(mesh) == pytest.approx(0.4483, abs=5e-5)
    # bases 1 and 1/2, slanted sides with horizontal run 1/4
    side = np.hypot(0.25, trapezoid_height())
    assert hydraulic_diameter(mesh) == pytest.approx(4 * trapezoid_area() / (1.5 + 2 * side), rel=1e-12)
    assert hydraulic_diameter(generate_square_mesh(3)) == pytest.approx(1.0, rel=1e-14)


def test_trapezoid_tpd_at_unit_hydraulic_rarefaction():
    modes, _ = coarse_vademecum("trapezoid")
    interp = ModeInterpolator(modes)
    d1 = 1.0 / hydraulic_diameter(modes.disc.mesh)
    res = tpd_solve(interp.G_P, interp.G_T, d1, 3.8, delta_range=modes.delta_grid.bounds)
    assert res.eta == pytest.approx(0.3572, abs=0.01)


# ---------------------------------------------------------------------------
# export


def test_export_constant_field(tmp_path):
    dg = build_dg_space(generate_square_mesh(1), 1)
    path = tmp_path / "c.csv"
    export_field(np.full(dg.shape, 2.5), dg, path, {"case": "P", "delta": 1.0})
    xy, vals, meta = import_field(path)
    assert len(vals) == 6 and np.all(vals == 2.5)
    assert meta == {"case": "P", "delta": "1.0"}
    assert np.array_equal(xy[:, 0], dg.x.ravel())


def test_export_round_trip_is_lossless(tmp_path, rng):
    dg = tiny_disc().dg
    v = rng.standard_normal(dg.shape)
    path = tmp_path / "f.csv"
    export_field(v, dg, path)
    xy, vals, _ = import_field(path)
    assert np.array_equal(vals, v.ravel())
    assert np.array_equal(xy, np.stack([dg.x.ravel(), dg.y.ravel()], axis=1))
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,value" and len(lines) == dg.n_elements * dg.n_p + 1


def test_export_shape_and_io_errors(tmp_path):
    dg = tiny_disc().dg
    with pytest.raises(ValueError):
        export_field(np.zeros(3), dg, tmp_path / "x.csv")
    with pytest.raises(OSError):
        export_field(np.zeros(dg.shape), dg, tmp_path / "missing" / "x.csv")
