import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracedist.builtins import builtin_chain, fig1, fig3
from tracedist.chain import ChainError, from_matrix, point_mass, word_probability
from tracedist.structure import (
    analyze,
    bottom_sccs,
    classify_state,
    deterministic_mask,
    extract_lasso,
    is_k_branching,
    is_ultimately_periodic,
    minimize_lasso,
    path_partition_mass,
    pathological_bsccs,
)

from .conftest import chains


def positive_words(chain, s, k):
    """Distinct label words of positive-probability length-k paths from s, by path DFS."""
    out = set()
    stack = [(chain.index(s),)]
    while stack:
        path = stack.pop()
        if len(path) == k:
            out.add(tuple(chain.labels[q] for q in path))
            continue
        for t in np.nonzero(chain.transitions[path[-1]] > 0)[0]:
            stack.append(path + (int(t),))
    return out


def brute_threshold(chain, s, k_max):
    for k in range(1, k_max + 1):
        if len(positive_words(chain, s, k)) > 1:
            return k
    return None


def brute_partition(chain, w, k, det):
    b = d = 0.0
    m = min(k, len(w))
    for path in itertools.product(range(chain.n), repeat=len(w)):
        if any(chain.labels[q] != a for q, a in zip(path, w)):
            continue
        p = chain.initial[path[0]]
        for x, y in zip(path, path[1:]):
            p *= chain.transitions[x, y]
        if any(det[q] for q in path[:m]):
            d += p
        else:
            b += p
    return b, d


def periodic_by_definition(w, k, n):
    suffix = w[k:]
    if not suffix:
        return True
    for d in range(1, n + 1):
        u = suffix[:d]
        if (u * (len(suffix) // max(1, len(u)) + 1))[: len(suffix)] == suffix:
            return True
    return False


def unroll(z, u, length):
    w = list(z)
    while len(w) < length:
        w.extend(u)
    return tuple(w[:length])


class TestClassification:
    def test_fig2_threshold(self):
        c = builtin_chain("fig2")
        cls = classify_state(c, "s1")
        assert cls.branching_threshold == 7
        w1, w2 = cls.witness_words
        assert len(w1) == len(w2) == 7 and w1 != w2
        ps = point_mass(c, "s1")
        assert word_probability(ps, w1) > 0 and word_probability(ps, w2) > 0
        # still 6-deterministic: aaabaa has probability one
        assert word_probability(ps, "aaabaa") == pytest.approx(1.0)

    def test_fig3_is_branching_at_four(self):
        assert classify_state(fig3(0.3), "s1").branching_threshold == 4

    def test_single_label_chain_deterministic(self):
        cls = classify_state(builtin_chain("lemma3-right"), "s")
        assert cls.deterministic
        assert cls.lasso == ((), ("a",))
        assert cls.to_dict()["branching_threshold"] == "deterministic"

    def test_k_max_floor(self):
        with pytest.raises(ChainError):
            classify_state(fig1(), "s", k_max=3)

    def test_lasso_of_branching_state(self):
        with pytest.raises(ChainError, match="branching"):
            extract_lasso(fig1(), "s")

    @given(chains(n_max=3))
    def test_threshold_matches_path_enumeration(self, chain):
        for s in chain.states:
            expected = brute_threshold(chain, s, chain.n**2)
            assert classify_state(chain, s).branching_threshold == expected

    @given(chains(n_max=3), st.integers(1, 10))
    def test_branching_upward_closed(self, chain, k):
        for s in chain.states:
            if is_k_branching(chain, s, k):
                assert is_k_branching(chain, s, k + 1)

    @given(chains())
    def test_lasso_spells_probability_one_word(self, chain):
        n = chain.n
        for s in chain.states:
            cls = classify_state(chain, s)
            if not cls.deterministic:
                continue
            z, u = cls.lasso
            assert 1 <= len(u) and len(z) + len(u) <= n
            w = unroll(z, u, 2 * n * n + 3)
            assert word_probability(point_mass(chain, s), w) == pytest.approx(1.0, abs=1e-9)


class TestLassoMinimization:
    def test_primitive_period(self):
        assert minimize_lasso((), ("a", "b", "a", "b")) == ((), ("a", "b"))

    def test_rotates_tail_into_loop(self):
        assert minimize_lasso(("b",), ("a", "b")) == ((), ("b", "a"))

    @given(st.lists(st.sampled_from("ab"), max_size=4), st.lists(st.sampled_from("ab"), min_size=1, max_size=4))
    def test_same_omega_word(self, z, u):
        z2, u2 = minimize_lasso(tuple(z), tuple(u))
        assert unroll(z2, u2, 40) == unroll(tuple(z), tuple(u), 40)
        assert len(z2) <= len(z) and len(u2) <= len(u)


class TestPartition:
    @given(chains(n_max=3), st.integers(1, 5), st.integers(0, 6), st.data())
    def test_matches_path_split(self, chain, length, k, data):
        w = tuple(data.draw(st.lists(st.sampled_from(chain.alphabet), min_size=length, max_size=length)))
        det = deterministic_mask(chain)
        mass = path_partition_mass(chain, w, k, det)
        b, d = brute_partition(chain, w, k, det)
        assert mass.b_mass == pytest.approx(b, abs=1e-12)
        assert mass.d_mass == pytest.approx(d, abs=1e-12)
        assert mass.total == pytest.approx(word_probability(chain, w), abs=1e-12)

    def test_k_zero_all_branching(self):
        mass = path_partition_mass(builtin_chain("cycle-ab"), "abab", 0)
        assert mass.d_mass == 0.0 and mass.b_mass == pytest.approx(1.0)

    def test_deterministic_chain_all_d(self):
        mass = path_partition_mass(builtin_chain("cycle-ab"), "abab", 2)
        assert mass.b_mass == 0.0 and mass.d_mass == pytest.approx(1.0)


class TestPeriodicity:
    def test_examples(self):
        assert is_ultimately_periodic("bbabab", 2, 2) == (True, ("a", "b"))
        assert is_ultimately_periodic("aabba", 1, 2)[0] is False
        assert is_ultimately_periodic("ab", 2, 1)[0] is True

    @given(st.lists(st.sampled_from("abc"), min_size=1, max_size=12), st.integers(0, 12), st.integers(1, 4))
    def test_matches_definition(self, w, k, n):
        w = tuple(w)
        flag, u = is_ultimately_periodic(w, k, n)
        assert flag == periodic_by_definition(w, k, n)
        if flag and w[k:]:
            assert len(u) <= n
            assert unroll((), u, len(w) - k) == w[k:]


def brute_bottoms(chain):
    R = (chain.transitions > 0).astype(int) + np.eye(chain.n, dtype=int)
    for _ in range(chain.n):
        R = ((R @ R) > 0).astype(int)
    comps = set()
    for i in range(chain.n):
        scc = frozenset(j for j in range(chain.n) if R[i, j] and R[j, i])
        if all(R[i, j] == 0 or j in scc for j in range(chain.n)):
            comps.add(scc)
    return comps


class TestBSCC:
    @given(chains(n_max=5))
    def test_bottom_components(self, chain):
        got = {frozenset(int(x) for x in idx) for idx in bottom_sccs(chain)}
        assert got == brute_bottoms(chain)

    def test_cycle_pathological(self):
        rep = pathological_bsccs(builtin_chain("cycle-ab"))
        assert rep.pathological and len(rep.flagged()) == 1

    def test_fig1_not_pathological(self):
        assert not pathological_bsccs(fig1(0.1)).pathological

    def test_unreachable_component_not_counted(self):
        P = [[0.5, 0.5, 0], [0.5, 0.5, 0], [0, 0, 1]]
        c = from_matrix("abb", P, [1, 0, 0])
        rep = pathological_bsccs(c)
        assert rep.flagged() and not rep.pathological

    def test_analyze_report(self):
        rep = analyze(builtin_chain("fig2"))
        assert rep["states"][0]["branching_threshold"] == 7
        assert rep["pathological"] is False
