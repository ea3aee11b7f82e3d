import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from exonarray import errors
from exonarray.ingest import IntensityMatrix
from exonarray.summarize import (ExpressionMatrix, extract_expression, fit_plm, fit_unit, mad,
                                 median_polish, read_expression_tsv, unit_probe_intensities,
                                 write_expression_tsv)

from conftest import grid_layout_rows


def test_polish_hand_example():
    overall, rows, cols, res = median_polish([[1, 2], [3, 4]])
    assert overall == 2.5
    assert np.array_equal(rows, [-1, 1])
    assert np.array_equal(cols, [-0.5, 0.5])
    assert np.array_equal(res, np.zeros((2, 2)))


def test_polish_constant():
    mp = median_polish(np.full((3, 4), 7.25))
    assert mp.overall == 7.25
    assert not mp.row_effects.any() and not mp.col_effects.any() and not mp.residuals.any()


def test_polish_single_row_and_column():
    row = np.array([[4.0, 1.0, 9.0, 2.0, 5.0]])
    mp = median_polish(row)
    assert mp.overall == np.median(row)
    assert np.array_equal(mp.col_effects, row[0] - np.median(row))
    assert np.array_equal(mp.row_effects, [0.0])
    mp = median_polish(row.T)
    assert mp.overall == np.median(row)
    assert np.array_equal(mp.row_effects, row[0] - np.median(row))


def test_polish_rejects_nonfinite():
    with pytest.raises(errors.NonFiniteInput):
        median_polish([[1.0, np.nan]])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
              elements=st.integers(-64, 64).map(lambda k: k / 8)))
def test_polish_reconstruction(x):
    for first in ("rows", "cols"):
        mp = median_polish(x, max_iter=3, first=first)
        rebuilt = mp.overall + mp.row_effects[:, None] + mp.col_effects[None, :] + mp.residuals
        assert np.allclose(rebuilt, x, rtol=0, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)),
              elements=st.floats(-20, 20, allow_nan=False)))
def test_polish_converged_medians(x):
    tol = 0.01
    mp = median_polish(x, max_iter=1000, tol=tol)
    assert mp.converged
    assert np.all(np.abs(np.median(mp.residuals, axis=1)) <= tol)
    assert np.all(np.abs(np.median(mp.residuals, axis=0)) <= tol)
    rebuilt = mp.overall + mp.row_effects[:, None] + mp.col_effects[None, :] + mp.residuals
    assert np.allclose(rebuilt, x, rtol=0, atol=1e-12)


def test_mad_constant():
    assert mad([1, 2, 3, 4, 100]) == pytest.approx(1.4826)
    assert mad([3, 3, 3]) == 0


# ---------------------------------------------------------------------------
# probe-level model

def test_additive_unit_recovered():
    alpha = np.array([0.3, -0.2, 0.5, 0.0, -0.4])
    beta = np.array([8.0, 8.5, 7.75, 9.0])
    fit = fit_unit("u", "cluster", alpha[:, None] + beta[None, :])
    assert np.allclose(fit.chip_effects, beta + np.median(alpha), atol=1e-12)
    assert np.allclose(fit.probe_affinities, alpha - np.median(alpha), atol=1e-12)
    assert np.allclose(fit.residuals, 0, atol=1e-12)
    assert fit.residual_scale == pytest.approx(0, abs=1e-12)


def test_single_probe_unit():
    y = np.array([[7.0, 8.0, 9.5]])
    fit = fit_unit("u", "probeset", y)
    assert np.array_equal(fit.chip_effects, y[0])
    assert np.array_equal(fit.probe_affinities, [0.0])


def test_chip_shift_leaves_residuals(rng):
    y = rng.normal(8, 1, (12, 6))
    shifted = y.copy()
    shifted[:, 2] += 1.7
    a, b = fit_unit("u", "cluster", y), fit_unit("u", "cluster", shifted)
    assert np.allclose(a.residuals, b.residuals, atol=1e-12)
    assert b.chip_effects[2] - a.chip_effects[2] == pytest.approx(1.7)


def test_empty_unit():
    with pytest.raises(errors.EmptyUnit):
        fit_unit("u", "cluster", np.zeros((0, 3)))


def _normalized(layout, values):
    return IntensityMatrix(np.asarray(values, float), layout.checksum,
                           tuple(f"s{j}" for j in range(values.shape[1])), stage="normalized")


def test_fit_plm_recovers_chip_effects(make_layout, rng):
    lay = make_layout(grid_layout_rows(20, 3, 4))
    n_s = 8
    beta = rng.normal(9, 1, (20, n_s))
    alpha = rng.normal(0, 0.5, lay.n_probes)
    logv = np.empty((lay.n_probes, n_s))
    for i, (_, _, cid) in enumerate(lay.probes):
        logv[i] = beta[int(cid[1:]) - 1] + alpha[i] + rng.normal(0, 0.1, n_s)
    fits = fit_plm(_normalized(lay, np.exp2(logv)), lay, "cluster")
    assert [f.unit_id for f in fits] == sorted(lay.cluster_index)
    for f in fits:
        true = beta[int(f.unit_id[1:]) - 1]
        assert np.corrcoef(true, f.chip_effects)[0, 1] > 0.99


def test_fit_plm_column_permutation(make_layout, rng):
    lay = make_layout(grid_layout_rows(3, 2, 3))
    v = np.exp2(rng.normal(8, 1, (lay.n_probes, 5)))
    perm = [3, 0, 4, 1, 2]
    a = fit_plm(_normalized(lay, v), lay, "probeset")
    b = fit_plm(_normalized(lay, v[:, perm]), lay, "probeset")
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.chip_effects[perm], fb.chip_effects)


def test_fit_plm_requires_normalized(make_layout):
    lay = make_layout(grid_layout_rows(1, 1, 2))
    m = IntensityMatrix(np.ones((2, 2)), lay.checksum, ("a", "b"), stage="bg_corrected")
    with pytest.raises(errors.StageError):
        fit_plm(m, lay, "cluster")
    m = IntensityMatrix(np.ones((2, 2)), lay.checksum + 1, ("a", "b"), stage="normalized")
    with pytest.raises(errors.LayoutMismatch):
        fit_plm(m, lay, "cluster")


def test_residual_scale_zero_iff_equal_residuals(rng):
    assert fit_unit("u", "cluster", np.add.outer([1.0, 2.0], [3.0, 5.0, 4.0])).residual_scale == 0
    assert fit_unit("u", "cluster", rng.normal(size=(4, 5))).residual_scale > 0


# ---------------------------------------------------------------------------
# expression matrices

def test_extract_expression():
    f1 = fit_unit("b", "cluster", np.array([[1.0, 2.0, 3.0]]))
    f2 = fit_unit("a", "cluster", np.array([[4.0, 5.0, 6.0]]))
    e = extract_expression([f1, f2], ("x", "y", "z"))
    assert e.unit_ids == ("a", "b")
    assert e.values.shape == (2, 3)
    assert list(e.row("b")) == [1.0, 2.0, 3.0]
    empty = extract_expression([])
    assert empty.values.shape == (0, 0)
    with pytest.raises(errors.MixedLevels):
        extract_expression([f1, fit_unit("c", "probeset", np.array([[1.0, 1.0, 1.0]]))])


def test_unit_probe_intensities(make_layout, rng):
    lay = make_layout(grid_layout_rows(3, 2, 2))
    v = rng.uniform(1, 1000, (lay.n_probes, 3))
    out = unit_probe_intensities(_normalized(lay, v), lay)
    values, labels = out["c1"]
    assert labels == ("ps1_1", "ps1_1", "ps1_2", "ps1_2")
    assert np.array_equal(values, np.log2(v[:4]))
    assert sum(m.shape[0] for m, _ in out.values()) == lay.n_probes


def test_expression_tsv_roundtrip(tmp_path):
    e = ExpressionMatrix(("u1", "u2"), np.array([[1.23456789, 2.0], [3.5, 1e-7]]), "probeset",
                         ("s1", "s2"))
    write_expression_tsv(e, tmp_path / "e.tsv")
    text = (tmp_path / "e.tsv").read_text()
    assert text.splitlines()[0] == "unit_id\ts1\ts2"
    assert text.splitlines()[1] == "u1\t1.23457\t2"
    back = read_expression_tsv(tmp_path / "e.tsv", "probeset")
    assert back.unit_ids == e.unit_ids and back.sample_names == e.sample_names
    assert np.allclose(back.values, e.values, rtol=1e-5)
