from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import integrate, stats

from exonarray import errors
from exonarray.ingest import IntensityMatrix, read_xarr
from exonarray.preprocess import (BgParams, background_correct, dump_normalized,
                                  estimate_bg_params, kde_mode, quantile_normalize,
                                  rma_background)


def posterior_mean_oracle(x, p):
    """E[S | S + N = x] by quadrature, S ~ Exp(alpha) on [0, x], N ~ N(mu, sigma^2)."""
    def w(s):
        return p.alpha * np.exp(-p.alpha * s) * stats.norm.pdf(x - s, p.mu, p.sigma)
    peak = min(max(x - p.mu, 0.0), x)
    pts = [peak] if 0 < peak < x else None
    num = integrate.quad(lambda s: s * w(s), 0, x, points=pts, epsabs=0, epsrel=1e-12,
                         limit=200)[0]
    den = integrate.quad(w, 0, x, points=pts, epsabs=0, epsrel=1e-12, limit=200)[0]
    return num / den


def matrix(values, stage="bg_corrected"):
    values = np.asarray(values, dtype=float)
    return IntensityMatrix(values, 1, tuple(f"s{j}" for j in range(values.shape[1])),
                           stage=stage)


# ---------------------------------------------------------------------------
# parameter estimation

def test_estimate_recovers_convolution_parameters():
    rng = np.random.default_rng(11)
    x = rng.normal(50, 10, 100_000) + rng.exponential(1 / 0.02, 100_000)
    p = estimate_bg_params(x)
    assert 45 <= p.mu <= 55
    assert 0.015 <= p.alpha <= 0.025


def test_estimate_errors():
    with pytest.raises(errors.DegenerateColumn):
        estimate_bg_params(np.full(500, 7.0))
    with pytest.raises(errors.TooFewProbes):
        estimate_bg_params(np.arange(1.0, 51.0))


def test_kde_mode_of_normal_sample():
    rng = np.random.default_rng(3)
    assert abs(kde_mode(rng.normal(100, 5, 50_000)) - 100) < 0.5


def test_bg_params_validation():
    with pytest.raises(errors.PreprocessError):
        BgParams(10, 0, 1)
    with pytest.raises(errors.PreprocessError):
        BgParams(10, 1, -1)


# ---------------------------------------------------------------------------
# correction

P = BgParams(50.0, 10.0, 0.02)


def test_correction_at_a_equals_zero_matches_oracle():
    x = P.mu + P.sigma ** 2 * P.alpha
    out = background_correct([x], P)[0]
    assert abs(out - posterior_mean_oracle(x, P)) < 1e-6


@pytest.mark.parametrize("x", [5.0, 30.0, 49.0, 70.0, 150.0, 600.0])
def test_correction_matches_oracle(x):
    assert abs(background_correct([x], P)[0] - posterior_mean_oracle(x, P)) < 1e-6


def test_correction_large_x_asymptote():
    x = P.mu + 20 * P.sigma
    out = background_correct([x], P)[0]
    assert abs(out - (x - P.mu - P.sigma ** 2 * P.alpha)) < 1e-3


def test_correction_positive_and_monotone():
    x = np.sort(np.random.default_rng(5).uniform(0.01, 2000, 20_000))
    out = background_correct(x, P)
    assert np.all(out > 0)
    assert np.all(np.diff(out) > 0)


def test_underflow_fallback(caplog):
    p = BgParams(1000.0, 1.0, 5.0)
    out = background_correct([1.0, 2000.0], p)
    assert out[0] == pytest.approx(1e-8)
    assert out[1] == pytest.approx(2000 - 1000 - 5.0, rel=1e-9)
    assert "underflow" in caplog.text


# ---------------------------------------------------------------------------
# quantile normalization

def test_quantile_hand_example():
    out = quantile_normalize(matrix([[1, 3], [2, 4]])).values
    assert np.array_equal(out, [[2, 2], [3, 3]])


def test_quantile_identical_columns_fixed():
    v = np.array([[5.0, 5.0], [1.0, 1.0], [3.0, 3.0]])
    assert np.array_equal(quantile_normalize(matrix(v)).values, v)


def test_quantile_tie_rule():
    out = quantile_normalize(matrix([[1, 3], [1, 4]])).values
    assert np.allclose(out[:, 0], [2.25, 2.25])
    assert np.allclose(out[:, 1], [2.0, 2.5])


def test_quantile_stage_and_errors():
    with pytest.raises(errors.StageError):
        quantile_normalize(matrix([[1, 2]], stage="raw"))
    assert quantile_normalize(matrix([[1, 2]], stage="raw"), force=True).stage == "normalized"
    with pytest.raises(errors.EmptyMatrix):
        quantile_normalize(matrix(np.zeros((0, 2))))


@settings(max_examples=80, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 6)),
              elements=st.floats(0, 1e4, allow_nan=False)))
def test_quantile_properties(values):
    out = quantile_normalize(matrix(values)).values
    ref = np.sort(out[:, 0])
    for j in range(out.shape[1]):
        col_sorted = np.sort(out[:, j])
        if len(np.unique(values[:, j])) == values.shape[0]:
            assert np.allclose(col_sorted, ref, atol=1e-9 * max(1, np.abs(ref).max()))
        # order preserved (weakly under ties)
        order = np.argsort(values[:, j], kind="stable")
        assert np.all(np.diff(out[order, j]) >= -1e-9)
    # permuting columns permutes the output
    perm = np.arange(values.shape[1])[::-1]
    assert np.array_equal(quantile_normalize(matrix(values[:, perm])).values, out[:, perm])
    # ties pool reference values, so idempotence only holds without them
    if all(len(np.unique(values[:, j])) == values.shape[0] for j in range(values.shape[1])):
        again = quantile_normalize(matrix(out)).values
        assert np.allclose(again, out, atol=1e-9 * max(1, np.abs(out).max()))


# ---------------------------------------------------------------------------
# array-level pipeline

def test_rma_background_thread_independent():
    rng = np.random.default_rng(8)
    v = rng.normal(40, 5, (3000, 4)).clip(1) + rng.exponential(200, (3000, 4))
    m = IntensityMatrix(v, 1, ("a", "b", "c", "d"))
    single, p1 = rma_background(m)
    with ThreadPoolExecutor(4) as pool:
        multi, p4 = rma_background(m, pool)
    assert np.array_equal(single.values, multi.values)
    assert p1 == p4
    assert single.stage == "bg_corrected"


def test_dump_normalized(make_layout, tmp_path):
    from conftest import grid_layout_rows
    lay = make_layout(grid_layout_rows(1, 1, 3))
    m = IntensityMatrix(np.arange(6.0).reshape(3, 2), lay.checksum, ("x", "y"),
                        stage="normalized")
    dump_normalized(m, lay, tmp_path / "n")
    checksum, meta, values = read_xarr(tmp_path / "n" / "y.xarr")
    assert meta == "stage=normalized" and checksum == lay.checksum
    assert list(values) == [1.0, 3.0, 5.0]
