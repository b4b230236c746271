"""White-box distances between two chains, horizon bounds and the TV demonstration.

Sweeps over Sigma^k run as a depth-first branch and bound over the shared
prefix trie.  A subtree rooted at word w is cut when no extension of w can
beat the current best contrast.  Two bounds are used:

* contrast of any extension <= max(P1(w), P2(w)), since probabilities only
  shrink under extension;
* contrast of any extension <= sqrt(n1 + n2) * |proj(x)|, where
  x = (alpha1, -alpha2) stacks the forward vectors and proj is the orthogonal
  projection onto the span of the continuation vectors g_v (g_v(s) = probability
  that the next |v| labels from s read v).  The span is closed under one-symbol
  extension and has dimension at most n1 + n2, so it is computed once up front.
  This bound is zero for trace-equivalent configurations, which keeps sweeps of
  identical chains cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom, norm

from .chain import ChainError, MarkovChain, format_word, shared_alphabet
from .structure import is_ultimately_periodic

ENUMERATION_GUARD = 10**7
_PRUNE_SLACK = 1e-12


class EnumerationGuardError(RuntimeError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


@dataclass
class HorizonBound:
    k: int
    epsilon: float
    mode: str
    n: int
    p_min: float

    def to_dict(self):
        return dict(k=self.k, epsilon=self.epsilon, mode=self.mode, n=self.n, p_min=self.p_min)


@dataclass
class DistanceValue:
    value: float
    argmax_word: tuple | None
    error_bound: float
    k: int | None = None
    nodes: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "value": self.value,
            "argmax_word": None if self.argmax_word is None else format_word(self.argmax_word),
            "error_bound": self.error_bound,
            "k": self.k,
            "nodes": self.nodes,
        }
        d.update(self.extra)
        return d


def compute_horizon(n: int, p_min: float, epsilon: float, mode: str = "thm7") -> HorizonBound:
    """Trace length after which longer words change the finite-trace distance by <= epsilon.

    ``thm7``: n^2 * ceil(log eps / log(1 - p_min^(n^2))) + 2n.
    ``appendixB``: smallest integer above N ln eps / ln(1 - p_min^N), N = n^2 - 1;
    only valid for chains without pathological BSCCs.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if not 0 < p_min < 1:
        raise ValueError(f"p_min must lie in (0,1), got {p_min}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
    n = int(n)
    if mode == "thm7":
        q = 1.0 - p_min ** (n * n)
        if q >= 1.0:
            raise ValueError("p_min^(n^2) underflows; horizon is unbounded in floating point")
        c = math.ceil(math.log(epsilon) / math.log(q))
        k = n * n * c + 2 * n
    elif mode == "appendixB":
        N = n * n - 1
        if N == 0:
            raise ValueError("appendixB horizon needs n >= 2 (a 1-state chain is pathological)")
        q = 1.0 - p_min**N
        if q >= 1.0:
            raise ValueError("p_min^N underflows; horizon is unbounded in floating point")
        k = math.floor(N * math.log(epsilon) / math.log(q)) + 1
    else:
        raise ValueError(f"unknown horizon mode {mode!r}")
    return HorizonBound(k=k, epsilon=epsilon, mode=mode, n=n, p_min=p_min)


def pair_pmin(c1: MarkovChain, c2: MarkovChain) -> float:
    """Common p_min for two chains; fully deterministic chains fall back to 1/2."""
    p = min(c1.effective_pmin(), c2.effective_pmin())
    return min(p, 0.5)


class _PairSweep:
    """Joint forward vectors for two chains over a shared alphabet."""

    def __init__(self, c1: MarkovChain, c2: MarkovChain):
        self.alphabet = shared_alphabet(c1, c2)
        self.c1, self.c2 = c1, c2
        self.P1, self.P2 = c1.transitions, c2.transitions
        self.m1 = [c1.label_mask(a) for a in self.alphabet]
        self.m2 = [c2.label_mask(a) for a in self.alphabet]
        self.root_scale = math.sqrt(c1.n + c2.n)
        self.basis = self._continuation_basis()

    def _continuation_basis(self) -> np.ndarray:
        n1 = self.c1.n
        ops = []
        for a in range(len(self.alphabet)):
            T = np.zeros((n1 + self.c2.n, n1 + self.c2.n))
            T[:n1, :n1] = self.P1 * self.m1[a][None, :]
            T[n1:, n1:] = self.P2 * self.m2[a][None, :]
            ops.append(T)
        basis: list[np.ndarray] = []
        queue = [np.ones(n1 + self.c2.n)]
        while queue:
            v = queue.pop()
            r = v.copy()
            for b in basis:
                r -= (b @ r) * b
            for b in basis:  # second pass for stability
                r -= (b @ r) * b
            norm_r = np.linalg.norm(r)
            if norm_r <= 1e-10 * max(1.0, np.linalg.norm(v)):
                continue
            basis.append(r / norm_r)
            queue.extend(T @ v for T in ops)
        return np.array(basis)

    def roots(self):
        for a in range(len(self.alphabet)):
            yield (a,), self.c1.initial * self.m1[a], self.c2.initial * self.m2[a]

    def children(self, word, a1, a2):
        f1 = a1 @ self.P1
        f2 = a2 @ self.P2
        for a in range(len(self.alphabet)):
            yield word + (a,), f1 * self.m1[a], f2 * self.m2[a]

    def bound(self, a1, a2, s1, s2) -> float:
        ub = max(s1, s2)
        x = np.concatenate([a1, -a2])
        proj = float(np.linalg.norm(self.basis @ x)) * self.root_scale
        return min(ub, proj)

    def to_labels(self, word):
        return tuple(self.alphabet[a] for a in word)


def _sweep(c1, c2, k, *, upto, tolerance=0.0, guard=ENUMERATION_GUARD, accept=None,
           stop_above=None):
    """Max contrast over words of length k (or all lengths <= k when ``upto``)."""
    sw = _PairSweep(c1, c2)
    best, best_word = 0.0, None
    best_len = None
    nodes = 0
    slack = _PRUNE_SLACK + tolerance
    stack = list(reversed(list(sw.roots())))
    while stack:
        word, a1, a2 = stack.pop()
        nodes += 1
        if nodes > guard:
            raise EnumerationGuardError(
                f"enumeration guard of {guard} nodes exceeded at horizon k={k}", k=k
            )
        s1, s2 = float(a1.sum()), float(a2.sum())
        if s1 == 0.0 and s2 == 0.0:
            continue
        depth = len(word)
        if upto or depth == k:
            contrast = abs(s1 - s2)
            if contrast > best and (accept is None or accept(word, s1, s2)):
                best, best_word, best_len = contrast, word, depth
                if stop_above is not None and best > stop_above:
                    break
        if depth == k:
            continue
        if sw.bound(a1, a2, s1, s2) <= best + slack:
            continue
        kids = [
            (w, b1, b2) for w, b1, b2 in sw.children(word, a1, a2)
            if sw.bound(b1, b2, float(b1.sum()), float(b2.sum())) > best + slack
        ]
        stack.extend(reversed(kids))
    if best_word is None:
        best_word = _some_positive_word(c1, k if not upto else 1)
    else:
        best_word = sw.to_labels(best_word)
    return best, best_word, best_len, nodes


def _some_positive_word(chain: MarkovChain, k: int):
    state = int(np.argmax(chain.initial > 0))
    word = [chain.labels[state]]
    for _ in range(k - 1):
        state = int(np.argmax(chain.transitions[state] > 0))
        word.append(chain.labels[state])
    return tuple(word)


def fixed_k_distance(c1: MarkovChain, c2: MarkovChain, k: int,
                     guard: int = ENUMERATION_GUARD) -> DistanceValue:
    """max over w in Sigma^k of |P1(w) - P2(w)|, exact."""
    if k < 1:
        raise ValueError("k must be >= 1")
    value, word, _, nodes = _sweep(c1, c2, k, upto=False, guard=guard)
    return DistanceValue(value, word, 0.0, k=k, nodes=nodes)


def sweep_distance(c1: MarkovChain, c2: MarkovChain, k: int, tolerance: float = 0.0,
                   guard: int = ENUMERATION_GUARD) -> DistanceValue:
    """max over i <= k of D^i, up to ``tolerance``."""
    value, word, length, nodes = _sweep(c1, c2, k, upto=True, tolerance=tolerance, guard=guard)
    return DistanceValue(value, word, tolerance, k=k, nodes=nodes, extra={"argmax_length": length})


def finite_trace_distance(c1: MarkovChain, c2: MarkovChain, epsilon: float,
                          tolerance: float = 0.0, guard: int = ENUMERATION_GUARD) -> DistanceValue:
    """Finite-trace distance within ``epsilon`` (+ ``tolerance`` from pruning)."""
    n = max(c1.n, c2.n)
    h = compute_horizon(n, pair_pmin(c1, c2), epsilon, "thm7")
    value, word, length, nodes = _sweep(c1, c2, h.k, upto=True, tolerance=tolerance, guard=guard)
    return DistanceValue(
        value, word, epsilon + tolerance, k=h.k, nodes=nodes,
        extra={"argmax_length": length, "horizon": h.to_dict()},
    )


def prefix_limit_error(n: int, p_min: float, K: int) -> float:
    """Certified gap between a K-prefix probability and its omega-word limit, for both chains."""
    q = 1.0 - p_min ** (n * n)
    return 2.0 * q ** ((K - 2 * n) // (n * n))


def infinite_trace_distance_approx(c1: MarkovChain, c2: MarkovChain, epsilon: float,
                                   tolerance: float | None = None,
                                   guard: int = ENUMERATION_GUARD) -> DistanceValue:
    """Infinite-trace distance from ultimately periodic words of length K.

    The returned error bound adds the pruning ``tolerance`` (default epsilon/10)
    to the certified prefix-to-limit gap.
    """
    n = max(c1.n, c2.n)
    p = pair_pmin(c1, c2)
    h = compute_horizon(n, p, epsilon, "thm7")
    K = h.k + n
    if tolerance is None:
        tolerance = epsilon / 10

    def accept(word, s1, s2):
        return max(s1, s2) > 0 and is_ultimately_periodic(word, K - n, n)[0]

    value, word, _, nodes = _sweep(
        c1, c2, K, upto=False, tolerance=tolerance, guard=guard, accept=accept
    )
    bound = prefix_limit_error(n, p, K)
    return DistanceValue(
        value, word, bound + tolerance, k=K, nodes=nodes,
        extra={"prefix_error": bound, "prune_tolerance": tolerance, "horizon": h.to_dict()},
    )


def decide_trace_equivalence(c1: MarkovChain, c2: MarkovChain, tol: float = 1e-9) -> bool:
    """Equal probability on every word up to length |c1| + |c2| - 1."""
    K = c1.n + c2.n - 1
    value, *_ = _sweep(c1, c2, K, upto=True, stop_above=tol)
    return value <= tol


@dataclass
class TVDemo:
    tau: float
    n: int
    c_n: int
    p1: float
    p2: float
    exact: bool

    @property
    def gap(self) -> float:
        return self.p1 - self.p2


def tv_threshold(tau: float, n_steps: int) -> int:
    return math.floor((0.5 + tau / 2) * n_steps + 1e-9)


def tv_lower_bound_demo(tau: float, n_steps: int, exact: bool = True) -> TVDemo:
    """P(E_n) under the tau = 0 chain and the tau chain, E_n = at most c_n b's in n steps.

    Under stationary initial distributions each emitted label is an independent
    trial, so the count of b's is binomial.  The approximate variant uses the
    normal limit of both counts.
    """
    if not 0 < tau < 0.5:
        raise ValueError(f"tau must lie in (0, 0.5), got {tau}")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    c = tv_threshold(tau, n_steps)
    if exact:
        p1 = float(binom.cdf(c, n_steps, 0.5))
        p2 = float(binom.cdf(c, n_steps, 0.5 + tau))
    else:
        r = math.sqrt(n_steps)
        p1 = float(norm.cdf(tau * r))
        p2 = float(norm.cdf(-0.5 * tau * r / math.sqrt(0.25 - tau * tau)))
    return TVDemo(tau, n_steps, c, p1, p2, exact)
