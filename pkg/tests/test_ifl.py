import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iflasso.core import CoefficientMatrix, RegressionPanel, stack_design
from iflasso.ifl import (
    BreakPattern,
    IflConfig,
    MalformedPatternError,
    build_gamma_d,
    build_M,
    detect_breaks,
    fit_ifl,
    mop,
    read_fit_json,
    select_variables,
)
from iflasso.simulate import ScenarioSpec, generate_instance


@st.composite
def patterns(draw, max_T=10, max_p=5):
    T = draw(st.integers(2, max_T))
    p = draw(st.integers(1, max_p))
    breaks = tuple(tuple(draw(st.sets(st.integers(1, T - 1)))) for _ in range(p))
    return BreakPattern(T, breaks)


def brute_force_single_break(y, x):
    """Best single-break (or no-break) segmentation of a one-component panel by RSS."""
    T = y.size

    def rss(sl):
        xs, ys = x[sl], y[sl]
        c = (xs @ ys) / (xs @ xs)
        return float(np.sum((ys - c * xs) ** 2))

    best_t, best = None, rss(slice(0, T))
    for t in range(1, T):
        r = rss(slice(0, t)) + rss(slice(t, T))
        if r < best - 1e-12:
            best_t, best = t, r
    return best_t


# -- BreakPattern


def test_pattern_validation():
    with pytest.raises(ValueError):
        BreakPattern(1, ((),))
    with pytest.raises(ValueError):
        BreakPattern(4, ((0,),))
    with pytest.raises(ValueError):
        BreakPattern(4, ((4,),))
    with pytest.raises(ValueError):
        BreakPattern(4, ())


@given(patterns())
def test_pattern_starts_roundtrip(pattern):
    s = pattern.starts
    assert s[:: pattern.T].all() and s.sum() == pattern.p + pattern.n_breaks
    assert BreakPattern.from_starts(s, pattern.T) == pattern
    assert BreakPattern.from_set(pattern.as_set(), pattern.T, pattern.p) == pattern


# -- gamma_d and M


def test_gamma_d_examples():
    assert build_gamma_d(BreakPattern(3, ((1,), ()))).tolist() == [1, 2, 0, 3, 0, 0]
    assert build_gamma_d(BreakPattern.empty(2, 3)).tolist() == [1, 0, 2, 0, 3, 0]
    assert build_gamma_d(BreakPattern.full(4, 2)).tolist() == list(range(1, 9))


def test_M_examples():
    M = build_M(np.array([1, 2, 0, 3, 0, 0]), [6], [3])
    assert np.array_equal(M, np.eye(3)[[0, 1, 1, 2, 2, 2]])
    assert np.array_equal(build_M(np.arange(1, 7), [3, 3], [3, 3]), np.eye(6))


@pytest.mark.parametrize(
    "gamma_d, beta_in, beta_out",
    [
        (np.array([0, 1, 0]), [3], [1]),  # no start at the block head
        (np.array([2, 1, 0]), [3], [2]),  # labels out of order
        (np.array([1, 0, 2, 0]), [2, 2], [1, 2]),  # counts disagree with beta_out
        (np.array([1, 0]), [3], [1]),  # wrong length
    ],
)
def test_M_rejects_malformed(gamma_d, beta_in, beta_out):
    with pytest.raises(MalformedPatternError):
        build_M(gamma_d, beta_in, beta_out)


def test_lag_other_than_one_unsupported():
    with pytest.raises(NotImplementedError):
        build_gamma_d(BreakPattern.empty(3, 1), d=2)


@given(patterns(), st.data())
def test_mop_invariants(pattern, data):
    rmap = mop(pattern)
    M = rmap.M
    T, p = pattern.T, pattern.p
    assert M.shape == (T * p, p + pattern.n_breaks)
    assert np.all(M.sum(axis=1) == 1)
    assert np.all(M.sum(axis=0) >= 1)
    assert rmap.n_beta_out == p + pattern.n_breaks
    assert np.all(rmap.beta_out <= rmap.beta_in)
    assert rmap.gamma_d[rmap.gamma_d != 0].tolist() == list(range(1, rmap.n_beta_out + 1))
    # block diagonal with contiguous runs
    comp = rmap.segment_component
    for i in range(T * p):
        k = int(np.flatnonzero(M[i])[0])
        assert comp[k] == i // T
        if i % T:
            prev = int(np.flatnonzero(M[i - 1])[0])
            assert k in (prev, prev + 1)
    assert sum(e - s + 1 for _, s, e in rmap.segment_bounds()) == T * p
    # reconstruction and fixpoint
    vals = np.array(data.draw(st.lists(st.floats(-5, 5).filter(lambda v: v != 0), min_size=M.shape[1], max_size=M.shape[1])))
    # make neighbouring segment values distinct so the implied pattern is unambiguous
    vals = vals + np.arange(vals.size) * 11.0
    b = M @ vals
    B = CoefficientMatrix.unvec(b, T)
    assert BreakPattern.from_coefficients(B) == pattern
    again = mop(BreakPattern.from_coefficients(B))
    assert np.array_equal(again.M, M) and np.array_equal(again.gamma_d, rmap.gamma_d)


def test_mop_examples():
    rmap = mop(BreakPattern.empty(3, 2))
    assert rmap.beta_out.tolist() == [1, 1]
    assert np.array_equal(rmap.M, np.kron(np.eye(2), np.ones((3, 1))))
    assert mop(BreakPattern(4, ((2,), ()))).beta_out.tolist() == [2, 1]
    full = mop(BreakPattern.full(4, 3))
    assert full.beta_out.tolist() == [4, 4, 4] and np.array_equal(full.M, np.eye(12))


# -- Step 1


def test_detect_single_break_unit_regressor():
    panel = RegressionPanel(y=np.array([1.0, 1, 1, 3, 3, 3]), X=np.ones((6, 1)))
    x = panel.X[:, 0]
    assert brute_force_single_break(panel.y, x) == 3
    _, pattern = detect_breaks(panel)
    assert pattern.as_set() == {(0, 3)}


def test_detect_constant_coefficients_has_no_breaks():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 3))
    panel = RegressionPanel(y=X @ np.array([1.5, 0.0, -2.0]), X=X)
    _, pattern = detect_breaks(panel)
    assert pattern.n_breaks == 0


def test_detect_break_in_second_component():
    rng = np.random.default_rng(1)
    T = 12
    X = rng.standard_normal((T, 2))
    B = np.array([[1.0] * T, [2.0] * 3 + [-1.0] * (T - 3)])
    panel = RegressionPanel(y=np.einsum("tj,jt->t", X, B), X=X)
    _, pattern = detect_breaks(panel)
    assert pattern.as_set() == {(1, 3)}


# -- Step 3


def test_select_without_breaks_is_static_adalasso():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((40, 6))
    beta = np.array([0, 1.5, 0, 0, -2.0, 0])
    panel = RegressionPanel(y=X @ beta, X=X)
    rmap = mop(BreakPattern.empty(40, 6))
    H = stack_design(panel).materialize() @ rmap.M
    np.testing.assert_array_equal(H, X)
    gamma, B = select_variables(panel, rmap, IflConfig())
    assert set(np.flatnonzero(gamma)) == {1, 4}
    np.testing.assert_array_equal(B.vec(), rmap.M @ gamma)
    # noiseless BIC runs to the end of the grid, so the residual shrinkage is
    # about ratio * max|beta|^2 / |beta_j|; a longer grid gets within 1e-4
    np.testing.assert_allclose(gamma, beta, atol=1e-3)
    gamma, _ = select_variables(panel, rmap, IflConfig(lambda_ratio=1e-6))
    np.testing.assert_allclose(gamma, beta, atol=1e-4)


def test_select_rejects_mismatched_map():
    panel = RegressionPanel(y=np.ones(5), X=np.ones((5, 2)))
    with pytest.raises(ValueError):
        select_variables(panel, mop(BreakPattern.empty(4, 2)), IflConfig())


def test_pure_noise_gives_empty_support():
    # BIC admits a null regressor with probability about P(chi2_1 > ln T),
    # 3% at T = 100, so two candidates leave the support empty ~94% of the time
    empty = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((100, 2))
        panel = RegressionPanel(y=rng.standard_normal(100), X=X)
        gamma, _ = select_variables(panel, mop(BreakPattern.empty(100, 2)), IflConfig())
        empty += not np.any(gamma)
    assert empty >= 90


# -- full pipeline


def test_fit_single_break_exact():
    rng = np.random.default_rng(3)
    T = 40
    X = rng.standard_normal((T, 3))
    B = np.zeros((3, T))
    B[0, :20], B[0, 20:] = 1.0, 2.5
    B[2] = -1.5
    panel = RegressionPanel(y=np.einsum("tj,jt->t", X, B), X=X)
    fit = fit_ifl(panel)
    assert fit.breaks.as_set() == {(0, 20)}
    assert fit.support == [(0, 0), (0, 1), (2, 0)]
    np.testing.assert_allclose(fit.B_hat.B, B, atol=1e-3)


def test_fit_equals_manual_composition():
    inst = generate_instance(ScenarioSpec(p=6, q=2, n_per_regime=15), 4)
    cfg = IflConfig()
    fit = fit_ifl(inst.panel, cfg)
    _, pattern = detect_breaks(inst.panel, cfg)
    gamma, B = select_variables(inst.panel, mop(pattern), cfg)
    np.testing.assert_array_equal(fit.B_hat.B, B.B)
    assert fit.outer_iterations == 1


@pytest.mark.parametrize("seed", range(3))
def test_fit_reconstruction_is_exact(seed):
    inst = generate_instance(ScenarioSpec(p=8, q=3, n_per_regime=20), seed)
    fit = fit_ifl(inst.panel, IflConfig(max_outer=3))
    assert np.array_equal(fit.reduction.M @ fit.gamma_hat, fit.B_hat.vec())
    assert fit.K == fit.reduction.n_beta_out
    assert BreakPattern.from_coefficients(fit.B_hat) == fit.breaks
    assert 1 <= fit.outer_iterations <= 3
    again = mop(BreakPattern.from_coefficients(fit.B_hat))
    assert np.array_equal(again.M, fit.reduction.M)


def test_infinite_threshold_is_static_adalasso():
    inst = generate_instance(ScenarioSpec(p=6, q=2, n_per_regime=15), 1)
    fit = fit_ifl(inst.panel, IflConfig(break_threshold=np.inf))
    assert fit.breaks.n_breaks == 0
    gamma, _ = select_variables(inst.panel, mop(BreakPattern.empty(inst.panel.T, 6)), IflConfig())
    np.testing.assert_array_equal(fit.B_hat.B[:, 0], gamma)


def test_full_break_pattern_gives_original_design():
    panel = generate_instance(ScenarioSpec(p=3, q=1, n_per_regime=4), 0).panel
    rmap = mop(BreakPattern.full(panel.T, 3))
    assert rmap.n_beta_out == panel.T * 3
    np.testing.assert_array_equal(stack_design(panel).materialize() @ rmap.M, stack_design(panel).materialize())


def test_thirty_feature_break_counts():
    """Seeded p=30, q=5, four regimes of 50: per relevant component the break count is within one."""
    inst = generate_instance(ScenarioSpec(p=30, q=5, n_per_regime=50), 0)
    fit = fit_ifl(inst.panel)
    relevant = sorted({j for rel in inst.true_support for j in rel})
    off = {j: abs(len(fit.breaks.breaks[j]) - len(inst.true_breaks.breaks[j])) for j in relevant}
    assert max(off.values()) <= 1, off


def test_config_validation():
    with pytest.raises(ValueError):
        IflConfig(break_threshold=0.0)
    with pytest.raises(ValueError):
        IflConfig(max_outer=0)


def test_json_and_csv_export(tmp_path):
    inst = generate_instance(ScenarioSpec(p=4, q=2, n_per_regime=10), 2)
    fit = fit_ifl(inst.panel)
    fit.write_json(tmp_path / "fit.json")
    fit.write_beta_csv(tmp_path / "beta.csv")
    data = read_fit_json(tmp_path / "fit.json")
    np.testing.assert_array_equal(data["beta_hat"], fit.B_hat.by_time)
    assert data["estimator"] == "ifl"
    assert {(b["component"] - 1, b["time"] - 1) for b in data["breaks"]} == fit.breaks.as_set()
    for key in ("support", "lambda_break", "lambda_select", "diagnostics"):
        assert key in data
    rows = (tmp_path / "beta.csv").read_text().splitlines()
    assert rows[0] == "t,beta_1,beta_2,beta_3,beta_4" and len(rows) == inst.panel.T + 1
    again = fit_ifl(inst.panel)
    again.write_json(tmp_path / "fit2.json")
    assert (tmp_path / "fit.json").read_bytes() == (tmp_path / "fit2.json").read_bytes()
