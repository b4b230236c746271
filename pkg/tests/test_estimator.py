import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import chi2

from tracedist.builtins import builtin_chain, fig1
from tracedist.chain import ChainError, from_matrix
from tracedist.estimator import (
    DistanceReport,
    JointTraces,
    _max_contrast,
    chi_square_quantile,
    decide_equivalence_black_box,
    estimate_fixed_k,
    estimate_infinite,
    estimate_unbounded,
    goodman_intervals,
    goodman_M,
    hoeffding_half_width,
    infinite_horizon,
    learn_chain_finite_precision,
    paired_samplers,
)
from tracedist.oracle import compute_horizon, prefix_limit_error
from tracedist.sampler import Sampler, TraceCounts


class TestChiSquare:
    def test_reference_values(self):
        assert chi_square_quantile(0.95, 1) == pytest.approx(3.841459, rel=1e-6)
        assert chi_square_quantile(0.5, 2) == pytest.approx(2 * math.log(2), rel=1e-9)

    def test_df1_by_density_integration(self):
        x = chi_square_quantile(0.95, 1)
        pdf = lambda t: t ** -0.5 * math.exp(-t / 2) / math.sqrt(2 * math.pi)
        area, _ = integrate.quad(pdf, 0, x)
        assert area == pytest.approx(0.95, abs=1e-8)

    @given(st.floats(0.01, 0.99), st.integers(1, 5000))
    def test_matches_scipy(self, p, df):
        assert chi_square_quantile(p, df) == pytest.approx(float(chi2.ppf(p, df)), rel=1e-8)

    def test_large_df_approximation(self):
        df = 3 * 10**7
        assert chi_square_quantile(0.99, df) == pytest.approx(float(chi2.ppf(0.99, df)), rel=1e-6)

    def test_small_p_goes_to_zero(self):
        assert chi_square_quantile(1e-12, 2) < 1e-10

    def test_overflowing_df(self):
        assert chi_square_quantile(0.9, 2**2000) == math.inf

    @pytest.mark.parametrize("p,df", [(0.0, 1), (1.0, 1), (0.5, 0)])
    def test_invalid(self, p, df):
        with pytest.raises(ValueError):
            chi_square_quantile(p, df)


def counts_of(c1, c2, length=1):
    return TraceCounts(length, Counter({("a",) * 0 + tuple(w): n for w, n in c1.items()}),
                       Counter({tuple(w): n for w, n in c2.items()}), ("a", "b"))


class TestGoodman:
    def test_worked_example(self):
        tc = counts_of({"a": 60, "b": 40}, {"a": 40, "b": 60})
        est, params = goodman_intervals(tc, 0.05)
        assert params.degrees_of_freedom == 2
        assert params.M == pytest.approx(math.sqrt(-2 * math.log(0.05)), rel=1e-9)
        for e in est:
            assert e.delta == pytest.approx(0.2)
            assert e.S == pytest.approx(math.sqrt(0.24 / 100 + 0.24 / 100))
            assert e.half_width(params.M) == pytest.approx(0.1696, abs=1e-4)

    def test_degenerate_cells(self):
        tc = counts_of({"a": 100}, {"a": 100})
        est, _ = goodman_intervals(tc, 0.05)
        cells = {e.word: e for e in est}
        assert cells[("a",)].S == 0.0 and cells[("a",)].delta == 0.0
        assert cells[None].word is None  # pooled unseen "b"

    def test_needs_traces(self):
        with pytest.raises(ValueError):
            goodman_intervals(counts_of({}, {"a": 3}), 0.05)

    @given(st.dictionaries(st.sampled_from(["aa", "ab", "ba", "bb"]), st.integers(0, 50), min_size=1),
           st.dictionaries(st.sampled_from(["aa", "ab", "ba", "bb"]), st.integers(0, 50), min_size=1))
    def test_standard_error_formula(self, d1, d2):
        if sum(d1.values()) == 0 or sum(d2.values()) == 0:
            return
        tc = counts_of(d1, d2, length=2)
        n1, n2 = tc.n1, tc.n2
        est, params = goodman_intervals(tc, 0.1)
        assert params.degrees_of_freedom == 4
        for e in est:
            if e.word is None:
                continue
            p1 = tc.counts1[e.word] / n1
            p2 = tc.counts2[e.word] / n2
            assert e.S == pytest.approx(math.sqrt(p1 * (1 - p1) / n1 + p2 * (1 - p2) / n2), abs=1e-15)
            assert e.delta == pytest.approx(abs(p1 - p2))

    def test_simultaneous_coverage_smoke(self):
        rng = np.random.default_rng(0)
        p, q = np.array([0.1, 0.2, 0.3, 0.4]), np.array([0.25, 0.25, 0.25, 0.25])
        M = goodman_M(0.1, 4)
        hits = 0
        for _ in range(200):
            x, y = rng.multinomial(2000, p) / 2000, rng.multinomial(2000, q) / 2000
            S = np.sqrt(x * (1 - x) / 2000 + y * (1 - y) / 2000)
            hits += np.all(np.abs((x - y) - (p - q)) <= S * M)
        assert hits / 200 >= 0.85


class TestHoeffding:
    def test_formula(self):
        hw = hoeffding_half_width(100, 400, 2, 3, 0.05)
        t = math.log(4) + 3 * math.log(2) - math.log(0.05)
        assert hw == pytest.approx(math.sqrt(t / 200) + math.sqrt(t / 800))

    def test_decreasing_in_samples(self):
        assert hoeffding_half_width(1000, 1000, 2, 5, 0.1) < hoeffding_half_width(100, 100, 2, 5, 0.1)


def explicit_prefix_counts(X, n1, i):
    c1 = Counter(tuple(r[:i]) for r in X[:n1])
    c2 = Counter(tuple(r[:i]) for r in X[n1:])
    return c1, c2


class TestJointTraces:
    @given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_sweep_groups(self, n1, n2, k, seed):
        rng = np.random.default_rng(seed)
        A = rng.integers(0, 3, size=(n1, k)).astype(np.int8)
        B = rng.integers(0, 3, size=(n2, k)).astype(np.int8)
        jt = JointTraces(("a", "b", "c"))
        jt.add(A, B)
        X = np.concatenate([A, B])
        for i, c1, c2, rep in jt.sweep(k):
            e1, e2 = explicit_prefix_counts(X, n1, i)
            got1 = {tuple(X[rep[g], :i]): int(c1[g]) for g in range(len(rep)) if c1[g]}
            got2 = {tuple(X[rep[g], :i]): int(c2[g]) for g in range(len(rep)) if c2[g]}
            assert got1 == dict(e1) and got2 == dict(e2)

    @given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_max_contrast(self, n1, n2, k, seed):
        rng = np.random.default_rng(seed)
        A = rng.integers(0, 2, size=(n1, k)).astype(np.int8)
        B = rng.integers(0, 2, size=(n2, k)).astype(np.int8)
        jt = JointTraces(("a", "b"))
        jt.add(A, B)
        X = np.concatenate([A, B])
        best = 0.0
        for i in range(1, k + 1):
            e1, e2 = explicit_prefix_counts(X, n1, i)
            for w in set(e1) | set(e2):
                best = max(best, abs(e1[w] / n1 - e2[w] / n2))
        value, word = _max_contrast(jt, range(1, k + 1))
        assert value == pytest.approx(best, abs=1e-15)
        if word is not None:
            idx = tuple(("a", "b").index(s) for s in word)
            e1, e2 = explicit_prefix_counts(X, n1, len(word))
            assert abs(e1[idx] / n1 - e2[idx] / n2) == pytest.approx(value)

    def test_accept_filter(self):
        jt = JointTraces(("a", "b"))
        jt.add(np.array([[0, 0], [0, 0]], dtype=np.int8), np.array([[1, 1], [0, 1]], dtype=np.int8))
        value, word = _max_contrast(jt, [2], accept=lambda w: w != ("a", "a"))
        assert word in {("b", "b"), ("a", "b")} and value == pytest.approx(0.5)

    def test_counts(self):
        jt = JointTraces(("a", "b"))
        jt.add(np.array([[0, 1]], dtype=np.int8), np.array([[1, 1]], dtype=np.int8))
        tc = jt.counts()
        assert tc.counts1 == Counter({("a", "b"): 1}) and tc.counts2 == Counter({("b", "b"): 1})


class TestFixedK:
    def test_identical_chains(self):
        c = fig1(0.1)
        s1, s2 = paired_samplers(c, c, seed=1)
        r = estimate_fixed_k(s1, s2, 1, 0.05, 0.05)
        assert r.conforming and r.contains(0.0) and r.width <= 0.1 + 1e-12

    def test_fig1_pair(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, seed=2)
        r = estimate_fixed_k(s1, s2, 2, 0.05, 0.02)
        assert r.conforming and r.hi - r.lo <= 0.04 + 1e-12
        assert r.lo == pytest.approx(max(0, r.point - 0.02))
        assert r.samples_per_chain == [10_000, 10_000]

    def test_huge_epsilon_one_batch(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, seed=3)
        r = estimate_fixed_k(s1, s2, 2, 0.05, 2.0, batch_size=100)
        assert r.samples_per_chain == [100, 100] and (r.lo, r.hi) == (0.0, 1.0)

    def test_budget_exhaustion_is_non_conforming(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, seed=4)
        r = estimate_fixed_k(s1, s2, 2, 0.05, 0.001, batch_size=500, cap=2000)
        assert not r.conforming and r.half_width > 0.001
        assert r.hi - r.point == pytest.approx(min(r.half_width, 1 - r.point))

    def test_bonferroni_hoeffding(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, seed=5)
        r = estimate_fixed_k(s1, s2, 2, 0.05, 0.05, "bonferroni-hoeffding", batch_size=1000)
        assert r.conforming and r.half_width <= 0.05
        n = r.samples_per_chain[0]
        assert hoeffding_half_width(n - 1000, n - 1000, 2, 2, 0.05) > 0.05

    def test_hoeffding_width_close_to_goodman(self, fig1_pair):
        g = estimate_fixed_k(*paired_samplers(*fig1_pair, seed=8), 2, 0.05, 0.02)
        n1, n2 = g.samples_per_chain
        assert hoeffding_half_width(n1, n2, 2, 2, 0.05) <= 3 * g.half_width

    def test_reproducible(self, fig1_pair):
        a = estimate_fixed_k(*paired_samplers(*fig1_pair, seed=6), 2, 0.05, 0.05)
        b = estimate_fixed_k(*paired_samplers(*fig1_pair, seed=6), 2, 0.05, 0.05)
        assert a == b

    @pytest.mark.parametrize("kw", [{"k": 0}, {"epsilon_target": 0}, {"ci_method": "wald"}])
    def test_invalid(self, fig1_pair, kw):
        args = dict(k=2, alpha=0.05, epsilon_target=0.05) | kw
        with pytest.raises(ValueError):
            estimate_fixed_k(*paired_samplers(*fig1_pair), **args)

    def test_alphabet_mismatch(self):
        s1 = Sampler(fig1(), alphabet=("a", "b"))
        s2 = Sampler(fig1(), alphabet=("a", "b", "c"))
        with pytest.raises(ChainError):
            estimate_fixed_k(s1, s2, 1)


class TestUnbounded:
    def test_identical(self):
        c = fig1(0.1)
        s1, s2 = paired_samplers(c, c, seed=1)
        r = estimate_unbounded(s1, s2, 0.5, 2, 0.1, 0.4, "bonferroni-hoeffding")
        assert r.k == compute_horizon(2, 0.5, 0.2).k
        assert r.conforming and r.contains(0.0) and r.width <= 0.4 + 1e-12
        assert r.hi - r.point == pytest.approx(0.1 + 0.2)

    def test_goodman_budget(self):
        c = fig1(0.1)
        s1, s2 = paired_samplers(c, c, seed=1)
        r = estimate_unbounded(s1, s2, 0.5, 2, 0.1, 0.4, "goodman", batch_size=1000, cap=4000)
        assert not r.conforming and r.samples_per_chain == [2000, 2000]

    def test_invalid(self):
        c = fig1()
        with pytest.raises(ValueError):
            estimate_unbounded(*paired_samplers(c, c), 0.5, 2, 0.1, 1.5)


class TestInfinite:
    def test_horizon_raise(self):
        h, K, err, raised = infinite_horizon(2, 0.5, 0.2)
        assert K >= h.k + 2 and err == prefix_limit_error(2, 0.5, K)
        assert 2 * 0.05 + 2 * err <= 0.2 + 1e-12
        assert raised

    def test_cycles_contain_one(self):
        a, b = builtin_chain("cycle-ab"), builtin_chain("cycle-aa")
        s1, s2 = paired_samplers(a, b, seed=0)
        r = estimate_infinite(s1, s2, 0.5, 2, 0.05, 0.2, "bonferroni-hoeffding")
        assert r.point == 1.0 and r.contains(1.0) and r.conforming


class TestLearning:
    def test_recovers_grid_chain(self):
        c = fig1(0.1)
        s = Sampler(c, seed=3, observe_states=True)
        learned = learn_chain_finite_precision(s, 0.1, 0.05)
        assert learned.complete
        np.testing.assert_allclose(learned.chain.transitions, c.transitions, atol=1e-12)
        np.testing.assert_allclose(learned.chain.initial, c.initial, atol=1e-12)

    def test_deterministic_cycle(self):
        c = builtin_chain("cycle-ab")
        learned = learn_chain_finite_precision(Sampler(c, observe_states=True), 0.25)
        np.testing.assert_array_equal(learned.chain.transitions, c.transitions)

    def test_off_grid_row_that_still_sums_to_one(self):
        c = from_matrix("ab", [[0.6, 0.4], [0.6, 0.4]], [0.5, 0.5])
        learned = learn_chain_finite_precision(Sampler(c, seed=1, observe_states=True), 0.25)
        np.testing.assert_allclose(learned.chain.transitions, 0.5)
        assert learned.complete

    def test_off_grid_row_flagged(self):
        # thirds round to quarters summing to 3/4
        c = from_matrix("abc", np.full((3, 3), 1 / 3), [1 / 3] * 3)
        learned = learn_chain_finite_precision(Sampler(c, seed=1, observe_states=True), 0.25)
        assert set(learned.grid_inconsistent) == {"s0", "s1", "s2", "initial"}
        assert not learned.complete
        np.testing.assert_allclose(learned.chain.transitions.sum(axis=1), 1.0)

    def test_requires_state_access(self):
        with pytest.raises(ChainError):
            learn_chain_finite_precision(Sampler(fig1()), 0.1)

    def test_grid_must_divide_one(self):
        with pytest.raises(ValueError):
            learn_chain_finite_precision(Sampler(fig1(), observe_states=True), 0.3)

    def test_decisions(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, seed=0, observe_states=True)
        assert decide_equivalence_black_box(s1, s2, 0.1).equivalent is False
        s1, s2 = paired_samplers(fig1(), builtin_chain("fig1-unfolded"), seed=0, observe_states=True)
        r = decide_equivalence_black_box(s1, s2, 0.1)
        assert r.equivalent is True and r.k == 4

    def test_below_grid_difference_erased(self):
        # tau = 0.02 rounds to the same grid point as tau = 0 at g = 0.1
        s1, s2 = paired_samplers(fig1(0.0), fig1(0.02), seed=0, observe_states=True)
        assert decide_equivalence_black_box(s1, s2, 0.1).equivalent is True

    def test_declared_state_count(self, fig1_pair):
        s1, s2 = paired_samplers(*fig1_pair, observe_states=True)
        with pytest.raises(ChainError):
            decide_equivalence_black_box(s1, s2, 0.1, n1=3)


class TestReport:
    def test_roundtrip(self, fig1_pair):
        r = estimate_fixed_k(*paired_samplers(*fig1_pair), 2, 0.05, 0.05)
        assert DistanceReport.from_dict(r.to_dict()) == r
