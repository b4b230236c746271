"""Black-box estimation of trace distances from simulation runs.

Estimators draw batches from two :class:`~tracedist.sampler.Sampler` handles,
re-evaluate a stopping rule at each batch barrier and return a
:class:`DistanceReport`.  Two interval methods are available:

``goodman``
    simultaneous multinomial contrasts, half-width S_j * M with M^2 the
    chi-square quantile at 1 - alpha on |Sigma|^k degrees of freedom;
``bonferroni-hoeffding``
    a Hoeffding bound per cell and chain, union-bounded over the 2|Sigma|^k
    cells.  Its width does not depend on the counts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammainc
from scipy.stats import norm

from .chain import ChainError, MarkovChain, format_word
from .oracle import compute_horizon, decide_trace_equivalence, prefix_limit_error, sweep_distance
from .sampler import Sampler, TraceCounts
from .structure import is_ultimately_periodic

log = logging.getLogger(__name__)

CI_METHODS = ("goodman", "bonferroni-hoeffding")
DEFAULT_BATCH = 10_000
DEFAULT_CAP = 10**8
DEFAULT_SYMBOL_BUDGET = 4 * 10**8
_WILSON_HILFERTY_DF = 1e7


# -- chi-square quantile ------------------------------------------------------

def chi_square_quantile(p: float, df) -> float:
    """Quantile of the chi-square distribution by bisection on the incomplete gamma.

    ``df`` may be a huge Python integer (|Sigma|^k); beyond 1e7 degrees of freedom
    the Wilson-Hilferty cube approximation is used, and degrees of freedom that
    overflow a double give ``inf``.
    """
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0,1), got {p}")
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    try:
        d = float(df)
    except OverflowError:
        return math.inf
    if math.isinf(d):
        return math.inf
    if d > _WILSON_HILFERTY_DF:
        z = float(norm.ppf(p))
        c = 2.0 / (9.0 * d)
        return d * (1.0 - c + z * math.sqrt(c)) ** 3
    a = d / 2.0
    lo, hi = 0.0, max(1.0, d)
    while gammainc(a, hi / 2.0) < p:
        lo, hi = hi, hi * 2.0
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if gammainc(a, mid / 2.0) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    return 0.5 * (lo + hi)


def word_space_size(alphabet_size: int, k: int) -> int:
    return alphabet_size**k


# -- Goodman contrasts --------------------------------------------------------

@dataclass
class GoodmanParameters:
    alpha: float
    degrees_of_freedom: int
    M: float


@dataclass
class ContrastEstimate:
    word: tuple | None  # None is the pooled cell of unseen words
    p1: float
    p2: float
    delta: float
    S: float

    def half_width(self, M: float) -> float:
        return self.S * M


def goodman_M(alpha: float, df) -> float:
    return math.sqrt(chi_square_quantile(1.0 - alpha, df))


def standard_error(p1, p2, n1, n2):
    return np.sqrt((p1 - p1 * p1) / n1 + (p2 - p2 * p2) / n2)


def goodman_intervals(counts: TraceCounts, alpha: float, alphabet_size: int | None = None):
    """Contrast estimates for every observed word plus the pooled unseen cell."""
    n1, n2 = counts.n1, counts.n2
    if n1 < 1 or n2 < 1:
        raise ValueError("goodman_intervals needs at least one trace per chain")
    if alphabet_size is None:
        if not counts.alphabet:
            raise ValueError("alphabet size unknown")
        alphabet_size = len(counts.alphabet)
    df = word_space_size(alphabet_size, counts.length)
    params = GoodmanParameters(alpha, df, goodman_M(alpha, df))
    out = []
    for w in counts.words():
        p1 = counts.counts1.get(w, 0) / n1
        p2 = counts.counts2.get(w, 0) / n2
        out.append(ContrastEstimate(w, p1, p2, abs(p1 - p2), float(standard_error(p1, p2, n1, n2))))
    if len(out) < df:
        out.append(ContrastEstimate(None, 0.0, 0.0, 0.0, 0.0))
    return out, params


def hoeffding_half_width(n1: int, n2: int, alphabet_size: int, k: int, alpha: float) -> float:
    """Per-contrast half-width from Hoeffding, union bound over both chains' cells."""
    log_terms = math.log(4.0) + k * math.log(alphabet_size) - math.log(alpha)
    return math.sqrt(log_terms / (2 * n1)) + math.sqrt(log_terms / (2 * n2))


# -- reports --------------------------------------------------------------------

@dataclass
class DistanceReport:
    mode: str
    lo: float
    hi: float
    point: float
    k: int | None
    samples_per_chain: list
    alpha: float
    delta: float
    ci_method: str
    seed_lineage: dict = field(default_factory=dict)
    conforming: bool = True
    argmax_word: str | None = None
    half_width: float | None = None
    equivalent: bool | None = None
    extra: dict = field(default_factory=dict)

    @property
    def interval(self):
        return (self.lo, self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DistanceReport":
        return cls(**d)


def _clip_interval(point, below, above):
    return max(0.0, point - below), min(1.0, point + above)


def _lineage(s1: Sampler, s2: Sampler) -> dict:
    return {
        "chain_a": {"seed": s1.seed, "stream": str(s1.stream), "batches": s1.batches_drawn},
        "chain_b": {"seed": s2.seed, "stream": str(s2.stream), "batches": s2.batches_drawn},
    }


def paired_samplers(c1: MarkovChain, c2: MarkovChain, seed: int = 0, replication: int = 0,
                    observe_states: bool = False):
    """Two handles over a shared alphabet with distinct named streams."""
    from .chain import shared_alphabet

    alphabet = shared_alphabet(c1, c2)
    return (
        Sampler(c1, seed, f"chain-a/{replication}", observe_states, alphabet),
        Sampler(c2, seed, f"chain-b/{replication}", observe_states, alphabet),
    )


# -- joint trace store ----------------------------------------------------------

class JointTraces:
    """Traces of both chains stored as symbol arrays, swept prefix length by prefix length."""

    def __init__(self, alphabet: tuple):
        self.alphabet = tuple(alphabet)
        self._a: list = []
        self._b: list = []
        self._cache = None

    def add(self, sym1: np.ndarray, sym2: np.ndarray):
        self._a.append(sym1)
        self._b.append(sym2)
        self._cache = None

    @property
    def n1(self) -> int:
        return sum(x.shape[0] for x in self._a)

    @property
    def n2(self) -> int:
        return sum(x.shape[0] for x in self._b)

    @property
    def symbols_stored(self) -> int:
        return sum(x.size for x in self._a) + sum(x.size for x in self._b)

    def matrix(self) -> np.ndarray:
        if self._cache is None:
            self._cache = np.concatenate(self._a + self._b, axis=0)
        return self._cache

    def sweep(self, k: int):
        """Yield ``(i, c1, c2, rep)`` for prefix lengths i = 1..k.

        ``c1``/``c2`` are per-group counts of identical length-i prefixes and
        ``rep`` the row index of each group's first member.
        """
        X = self.matrix()
        n1 = self.n1
        S = len(self.alphabet)
        N = X.shape[0]
        g = np.zeros(N, dtype=np.int64)
        G = 1
        rows = np.arange(N)
        for i in range(k):
            code = g * S + X[:, i]
            present = np.zeros(G * S, dtype=bool)
            present[code] = True
            remap = np.cumsum(present) - 1
            g = remap[code]
            G = int(remap[-1]) + 1
            rep = np.empty(G, dtype=np.int64)
            rep[g[::-1]] = rows[::-1]
            c1 = np.bincount(g[:n1], minlength=G)
            c2 = np.bincount(g[n1:], minlength=G)
            yield i + 1, c1, c2, rep

    def word(self, row: int, length: int) -> tuple:
        return tuple(self.alphabet[s] for s in self.matrix()[row, :length])

    def counts(self, length: int | None = None) -> TraceCounts:
        """Explicit word counts (for reporting; the estimators work on arrays)."""
        from collections import Counter

        X = self.matrix()
        length = X.shape[1] if length is None else length
        n1 = self.n1
        c1, c2 = Counter(), Counter()
        for r in range(X.shape[0]):
            w = tuple(self.alphabet[s] for s in X[r, :length])
            (c1 if r < n1 else c2)[w] += 1
        return TraceCounts(length, c1, c2, self.alphabet)


def _max_goodman_half_width(traces: JointTraces, lengths, alpha: float, stop_above=None):
    """max over the given lengths and all cells of S_j * M_i."""
    n1, n2 = traces.n1, traces.n2
    S = len(traces.alphabet)
    lengths = set(lengths)
    worst = 0.0
    for i, c1, c2, _ in traces.sweep(max(lengths)):
        if i not in lengths:
            continue
        M = goodman_M(alpha, word_space_size(S, i))
        p1, p2 = c1 / n1, c2 / n2
        hw = float(standard_error(p1, p2, n1, n2).max()) * M
        worst = max(worst, hw)
        if stop_above is not None and worst > stop_above:
            break
    return worst


def _max_contrast(traces: JointTraces, lengths, accept=None):
    """Largest empirical contrast over the given prefix lengths.

    Deeper prefixes can only split groups, so once every group frequency is at
    most the current best no longer length can improve it.
    """
    n1, n2 = traces.n1, traces.n2
    lengths = set(lengths)
    best, best_word = 0.0, None
    for i, c1, c2, rep in traces.sweep(max(lengths)):
        f1, f2 = c1 / n1, c2 / n2
        if i in lengths:
            d = np.abs(f1 - f2)
            order = np.argsort(-d, kind="stable")
            for j in order:
                if d[j] <= best:
                    break
                w = traces.word(int(rep[j]), i)
                if accept is None or accept(w):
                    best, best_word = float(d[j]), w
                    break
        if max(f1.max(), f2.max()) <= best:
            break
    return best, best_word


def _check_samplers(s1: Sampler, s2: Sampler):
    if s1.alphabet != s2.alphabet:
        raise ChainError(f"sampler alphabets differ: {s1.alphabet} vs {s2.alphabet}")
    return s1.alphabet


def _check_method(ci_method):
    if ci_method not in CI_METHODS:
        raise ValueError(f"ci_method must be one of {CI_METHODS}, got {ci_method!r}")


def _sample_until(s1, s2, length, batch_size, cap, symbol_budget, half_width_fn, target):
    """Draw paired batches until ``half_width_fn(traces) <= target`` or the budget runs out."""
    traces = JointTraces(_check_samplers(s1, s2))
    hw = math.inf
    while True:
        b1 = s1.draw(length, batch_size)
        b2 = s2.draw(length, batch_size)
        traces.add(b1.symbols, b2.symbols)
        hw = half_width_fn(traces)
        if hw <= target:
            return traces, hw, True
        drawn = traces.n1 + traces.n2
        if drawn + 2 * batch_size > cap or traces.symbols_stored + 2 * batch_size * length > symbol_budget:
            log.warning("sample budget exhausted after %d traces (half-width %.4g > %.4g)",
                        drawn, hw, target)
            return traces, hw, False


# -- estimators ---------------------------------------------------------------------

def estimate_fixed_k(s1: Sampler, s2: Sampler, k: int, alpha: float = 0.05,
                     epsilon_target: float = 0.05, ci_method: str = "goodman",
                     batch_size: int = DEFAULT_BATCH, cap: int = DEFAULT_CAP,
                     symbol_budget: int = DEFAULT_SYMBOL_BUDGET) -> DistanceReport:
    """Estimate D^k to within +-epsilon_target with confidence 1 - alpha."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if epsilon_target <= 0:
        raise ValueError("epsilon_target must be positive")
    _check_method(ci_method)
    S = len(_check_samplers(s1, s2))

    if ci_method == "goodman":
        def hw_fn(tr):
            return _max_goodman_half_width(tr, [k], alpha)
    else:
        def hw_fn(tr):
            return hoeffding_half_width(tr.n1, tr.n2, S, k, alpha)

    traces, hw, ok = _sample_until(s1, s2, k, batch_size, cap, symbol_budget, hw_fn, epsilon_target)
    point, word = _max_contrast(traces, [k])
    radius = epsilon_target if ok else hw
    lo, hi = _clip_interval(point, radius, radius)
    return DistanceReport(
        mode="fixed-k", lo=lo, hi=hi, point=point, k=k,
        samples_per_chain=[traces.n1, traces.n2], alpha=alpha, delta=2 * epsilon_target,
        ci_method=ci_method, seed_lineage=_lineage(s1, s2), conforming=ok,
        argmax_word=None if word is None else format_word(word), half_width=hw,
    )


def estimate_unbounded(s1: Sampler, s2: Sampler, p_min: float, n: int, alpha: float = 0.05,
                       delta: float = 0.2, ci_method: str = "goodman",
                       batch_size: int = DEFAULT_BATCH, cap: int = DEFAULT_CAP,
                       symbol_budget: int = DEFAULT_SYMBOL_BUDGET) -> DistanceReport:
    """Estimate the finite-trace distance with an interval of width <= delta.

    delta is split into delta/2 for truncating at the horizon and delta/4 for
    each side of the statistical interval.  One set of length-k traces serves
    every prefix length; confidence alpha/k per length.
    """
    if not 0 < alpha < 1 or not 0 < delta < 1:
        raise ValueError("alpha and delta must lie in (0,1)")
    _check_method(ci_method)
    S = len(_check_samplers(s1, s2))
    eps_trunc, eps_stat = delta / 2, delta / 4
    horizon = compute_horizon(n, p_min, eps_trunc, "thm7")
    k = horizon.k
    a_len = alpha / k

    if ci_method == "goodman":
        M_top = goodman_M(a_len, word_space_size(S, k))  # M grows with the word length

        def hw_fn(tr):
            # S_j <= sqrt(1/(4 n1) + 1/(4 n2)) gives a cheap sufficient check
            cheap = math.sqrt(0.25 / tr.n1 + 0.25 / tr.n2) * M_top
            if cheap <= eps_stat:
                return cheap
            return _max_goodman_half_width(tr, range(1, k + 1), a_len, stop_above=eps_stat)
    else:
        def hw_fn(tr):
            return hoeffding_half_width(tr.n1, tr.n2, S, k, a_len)

    traces, hw, ok = _sample_until(s1, s2, k, batch_size, cap, symbol_budget, hw_fn, eps_stat)
    point, word = _max_contrast(traces, range(1, k + 1))
    if ok:
        lo, hi = _clip_interval(point, eps_stat, eps_stat + eps_trunc)
    else:
        lo, hi = _clip_interval(point, hw, hw + eps_trunc)
    return DistanceReport(
        mode="unbounded", lo=lo, hi=hi, point=point, k=k,
        samples_per_chain=[traces.n1, traces.n2], alpha=alpha, delta=delta,
        ci_method=ci_method, seed_lineage=_lineage(s1, s2), conforming=ok and hi - lo <= delta + 1e-12,
        argmax_word=None if word is None else format_word(word), half_width=hw,
        extra={"horizon": horizon.to_dict(), "epsilon_trunc": eps_trunc, "epsilon_stat": eps_stat},
    )


def infinite_horizon(n: int, p_min: float, delta: float):
    """Trace length K and certified prefix error for the infinite-trace estimator.

    Starts from the finite-trace horizon at delta/4 plus n.  If the resulting
    interval would be wider than delta, K is raised once, by the smallest
    multiple of n^2 that brings the prefix error to delta/4.
    """
    eps_stat = delta / 4
    h = compute_horizon(n, p_min, delta / 4, "thm7")
    K = h.k + n
    err = prefix_limit_error(n, p_min, K)
    retried = False
    if 2 * eps_stat + 2 * err > delta:
        q = 1.0 - p_min ** (n * n)
        need = math.ceil(math.log(delta / 8) / math.log(q))  # 2 q^c <= delta/4
        current = (K - 2 * n) // (n * n)
        K += max(1, need - current) * n * n
        err = prefix_limit_error(n, p_min, K)
        retried = True
    return h, K, err, retried


def estimate_infinite(s1: Sampler, s2: Sampler, p_min: float, n: int, alpha: float = 0.05,
                      delta: float = 0.2, ci_method: str = "goodman",
                      batch_size: int = DEFAULT_BATCH, cap: int = DEFAULT_CAP,
                      symbol_budget: int = DEFAULT_SYMBOL_BUDGET) -> DistanceReport:
    """Estimate the infinite-trace distance from K-prefixes of ultimately periodic words."""
    if not 0 < alpha < 1 or not 0 < delta < 1:
        raise ValueError("alpha and delta must lie in (0,1)")
    _check_method(ci_method)
    S = len(_check_samplers(s1, s2))
    eps_stat = delta / 4
    horizon, K, eps_prefix, retried = infinite_horizon(n, p_min, delta)

    if ci_method == "goodman":
        def hw_fn(tr):
            return _max_goodman_half_width(tr, [K], alpha)
    else:
        def hw_fn(tr):
            return hoeffding_half_width(tr.n1, tr.n2, S, K, alpha)

    traces, hw, ok = _sample_until(s1, s2, K, batch_size, cap, symbol_budget, hw_fn, eps_stat)

    def accept(w):
        return is_ultimately_periodic(w, K - n, n)[0]

    point, word = _max_contrast(traces, [K], accept=accept)
    radius = (eps_stat if ok else hw) + eps_prefix
    lo, hi = _clip_interval(point, radius, radius)
    return DistanceReport(
        mode="infinite", lo=lo, hi=hi, point=point, k=K,
        samples_per_chain=[traces.n1, traces.n2], alpha=alpha, delta=delta,
        ci_method=ci_method, seed_lineage=_lineage(s1, s2),
        conforming=ok and hi - lo <= delta + 1e-12,
        argmax_word=None if word is None else format_word(word), half_width=hw,
        extra={"horizon": horizon.to_dict(), "epsilon_prefix": eps_prefix,
               "epsilon_stat": eps_stat, "horizon_raised": retried},
    )


# -- finite precision learning --------------------------------------------------------

@dataclass
class LearnedChain:
    chain: MarkovChain
    grid: float
    confidence: float
    traces_used: int
    visits: list
    unresolved: list = field(default_factory=list)
    grid_inconsistent: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.unresolved and not self.grid_inconsistent


def _grid_size(g: float) -> int:
    m = round(1.0 / g)
    if m < 1 or abs(m * g - 1.0) > 1e-9:
        raise ValueError(f"precision grid must be 1/m for an integer m, got {g}")
    return m


def _round_row(freq: np.ndarray, m: int):
    num = np.rint(freq * m).astype(np.int64)
    consistent = int(num.sum()) == m
    if num.sum() == 0:
        return None, False
    row = num / m
    if not consistent:
        row = row / row.sum()
    return row, consistent


def learn_chain_finite_precision(sampler: Sampler, g: float, alpha: float = 0.05,
                                 batch_size: int = 2_000, trace_length: int | None = None,
                                 cap: int = 10**7) -> LearnedChain:
    """Recover a chain whose probabilities lie on the grid {0, g, 2g, ..., 1}.

    Every transition entry and initial entry is estimated until its Hoeffding
    half-width drops below g/2 at confidence 1 - alpha/(#entries), then
    rounded to the nearest grid point.
    """
    if not sampler.observe_states:
        raise ChainError("learning requires a state-observable sampler")
    m = _grid_size(g)
    n = sampler.n_states
    entries = n * n + n
    a_entry = alpha / entries
    need = math.floor(2.0 * math.log(2.0 / a_entry) / (g * g)) + 1
    L = trace_length or max(2, 2 * n + 1)

    init = np.zeros(n, dtype=np.int64)
    trans = np.zeros((n, n), dtype=np.int64)
    traces = 0
    while True:
        b = sampler.draw(L, batch_size)
        st = b.states.astype(np.int64)
        init += np.bincount(st[:, 0], minlength=n)
        pairs = (st[:, :-1] * n + st[:, 1:]).ravel()
        trans += np.bincount(pairs, minlength=n * n).reshape(n, n)
        traces += b.count
        visits = trans.sum(axis=1)
        if traces >= need and np.all(visits >= need):
            break
        if traces + batch_size > cap:
            break

    visits = trans.sum(axis=1)
    names = sampler.state_names
    unresolved = [names[i] for i in range(n) if visits[i] < need]
    inconsistent = []
    P = np.zeros((n, n))
    for i in range(n):
        row = None
        if visits[i] > 0:
            row, ok = _round_row(trans[i] / visits[i], m)
            if row is not None and not ok:
                inconsistent.append(names[i])
        if row is None:
            row = np.zeros(n)
            row[i] = 1.0
        P[i] = row
    mu, ok = _round_row(init / init.sum(), m)
    if not ok:
        inconsistent.append("initial")
    chain = MarkovChain(names, sampler.state_labels(), P, mu, alphabet=sampler.alphabet,
                        name="learned")
    return LearnedChain(chain, g, 1.0 - alpha, traces, visits.tolist(), unresolved, inconsistent)


def decide_equivalence_black_box(s1: Sampler, s2: Sampler, g: float, alpha: float = 0.05,
                                 n1: int | None = None, n2: int | None = None,
                                 **learn_kw) -> DistanceReport:
    """Learn both chains on the precision grid, then decide trace equivalence exactly."""
    _check_samplers(s1, s2)
    for declared, s in ((n1, s1), (n2, s2)):
        if declared is not None and declared != s.n_states:
            raise ChainError(f"declared state count {declared} != observed {s.n_states}")
    l1 = learn_chain_finite_precision(s1, g, alpha / 2, **learn_kw)
    l2 = learn_chain_finite_precision(s2, g, alpha / 2, **learn_kw)
    K = l1.chain.n + l2.chain.n - 1
    equivalent = decide_trace_equivalence(l1.chain, l2.chain)
    dv = sweep_distance(l1.chain, l2.chain, K)
    return DistanceReport(
        mode="equivalence", lo=dv.value, hi=dv.value, point=dv.value, k=K,
        samples_per_chain=[l1.traces_used, l2.traces_used], alpha=alpha, delta=0.0,
        ci_method="hoeffding-grid", seed_lineage=_lineage(s1, s2),
        conforming=l1.complete and l2.complete,
        argmax_word=format_word(dv.argmax_word) if dv.argmax_word else None,
        equivalent=equivalent,
        extra={"grid": g, "unresolved": l1.unresolved + l2.unresolved,
               "grid_inconsistent": l1.grid_inconsistent + l2.grid_inconsistent,
               "learned_a": l1.chain.to_dict(), "learned_b": l2.chain.to_dict()},
    )
