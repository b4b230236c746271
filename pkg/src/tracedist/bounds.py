"""Random chains and direct checks of the structural bounds.

Every check recomputes its quantity from the definitions (maximum word
probability, forward passes) rather than through the classification code it is
meant to validate, then compares against the bound.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np

from .chain import MarkovChain, point_mass, word_probability
from .structure import classify_state, deterministic_mask, is_ultimately_periodic, path_partition_mass

TOL = 1e-9
# branching_monotone: k-branching implies (k+1)-branching
# threshold_n2: n^2-deterministic implies deterministic for every k
# branching_word_bound: a k-branching state gives every length-k word P <= 1 - p^(k-1)
# branching_mass_bound: mass of all-branching paths decays like (1 - p^(n^2))^(k // n^2)
# partition: branching and deterministic path masses add up to P(w)
# long_words_periodic: long words with P > epsilon are ultimately periodic
# periodic_prefix_bound: extending a periodic word loses at most the decay bound
CHECK_NAMES = (
    "branching_monotone",
    "threshold_n2",
    "branching_word_bound",
    "branching_mass_bound",
    "partition",
    "long_words_periodic",
    "periodic_prefix_bound",
)


def random_chain(rng: np.random.Generator, n: int, n_labels: int = 2, p_min: float = 0.1,
                 det_bias: float = 0.3) -> MarkovChain:
    """Random chain whose positive entries are all >= ``p_min``.

    ``det_bias`` is the chance that a row has a single successor, which keeps
    deterministic cycles and lassos common.
    """
    alphabet = [chr(ord("a") + i) for i in range(n_labels)]
    labels = [alphabet[i] for i in rng.integers(0, n_labels, size=n)]
    max_support = min(n, int(math.floor(1.0 / p_min + 1e-12)))
    P = np.zeros((n, n))
    for i in range(n):
        m = 1 if rng.random() < det_bias else int(rng.integers(1, max_support + 1))
        support = rng.choice(n, size=m, replace=False)
        w = p_min + (1.0 - m * p_min) * rng.dirichlet(np.ones(m))
        P[i, support] = w / w.sum()
    mu = np.zeros(n)
    mu[int(rng.integers(n))] = 1.0
    return MarkovChain([f"s{i}" for i in range(n)], labels, P, mu, alphabet=alphabet, pmin=p_min)


def _masks(chain):
    return [chain.label_mask(a) for a in chain.alphabet]


def max_word_probability(chain: MarkovChain, k: int, floor: float = 0.0) -> float:
    """max over w in Sigma^k of P(w); subtrees at or below ``floor`` are skipped."""
    masks = _masks(chain)
    P = chain.transitions
    best = 0.0
    stack = [(1, chain.initial * m) for m in masks]
    while stack:
        depth, a = stack.pop()
        s = float(a.sum())
        if s <= max(best, floor):
            continue
        if depth == k:
            best = s
            continue
        f = a @ P
        stack.extend((depth + 1, f * m) for m in masks)
    return best


def deterministic_by_definition(chain: MarkovChain, s, k: int) -> bool:
    """Some word of length k has probability exactly 1 from ``s``."""
    return max_word_probability(point_mass(chain, s), k, floor=1.0 - TOL) >= 1.0 - TOL


def check_chain(chain: MarkovChain, rng: np.random.Generator, epsilon: float = 0.2,
                periodicity_cap: int = 3000, word_bound_kmax: int = 5):
    """Run every structural check on one chain; returns (violations, checks, skipped)."""
    viol, done, skip = Counter(), Counter(), Counter()
    n = chain.n
    n2 = n * n
    p = chain.min_positive_transition()
    if p >= 1.0:  # all rows deterministic: any p < 1 is a valid lower bound
        p = min(chain.effective_pmin(), 0.5)
    det_mask = deterministic_mask(chain)

    for s in chain.states:
        branching = [not deterministic_by_definition(chain, s, k) for k in range(1, n2 + 3)]
        done["branching_monotone"] += 1
        if any(branching[i] and not branching[i + 1] for i in range(len(branching) - 1)):
            viol["branching_monotone"] += 1
        cls = classify_state(chain, s)
        first = next((k + 1 for k, b in enumerate(branching) if b), None)
        if first != cls.branching_threshold and not (first is None and cls.deterministic):
            viol["branching_monotone"] += 1
        done["threshold_n2"] += 1
        if not branching[n2 - 1] and branching[n2]:
            viol["threshold_n2"] += 1

        ps = point_mass(chain, s)
        for k in range(1, min(word_bound_kmax, len(branching)) + 1):
            if not branching[k - 1]:
                continue
            bound = 1.0 - p ** (k - 1)
            done["branching_word_bound"] += 1
            if max_word_probability(ps, k, floor=bound + TOL) > bound + TOL:
                viol["branching_word_bound"] += 1

    for k in range(0, 2 * n2 + 1):
        bound = (1.0 - p**n2) ** (k // n2)
        done["branching_mass_bound"] += 1
        if _max_b_mass(chain, det_mask, k, k + 1, bound + TOL) > bound + TOL:
            viol["branching_mass_bound"] += 1

    for _ in range(5):
        length = int(rng.integers(1, 3 * n + 3))
        w = _sample_word(chain, length, rng)
        k = int(rng.integers(0, length + 2))
        mass = path_partition_mass(chain, w, k, det_mask)
        done["partition"] += 1
        if abs(mass.total - word_probability(chain, w)) > TOL:
            viol["partition"] += 1

    _check_long_words_periodic(chain, epsilon, p, periodicity_cap, viol, done, skip)
    _check_periodic_prefix_bound(chain, p, rng, viol, done, skip)
    return viol, done, skip


def _sample_word(chain, length, rng):
    s = int(rng.choice(chain.n, p=chain.initial))
    w = [chain.labels[s]]
    for _ in range(length - 1):
        s = int(rng.choice(chain.n, p=chain.transitions[s]))
        w.append(chain.labels[s])
    return tuple(w)


def _max_b_mass(chain, det_mask, k, length, floor):
    """max over words of the given length of the B^k path mass."""
    masks = _masks(chain)
    P = chain.transitions
    keep = 1.0 - det_mask.astype(float)
    best = 0.0
    stack = []
    for m in masks:
        b = chain.initial * m
        if k >= 1:
            b = b * keep
        stack.append((1, b))
    while stack:
        depth, b = stack.pop()
        s = float(b.sum())
        if s <= max(best, floor):
            continue
        if depth == length:
            best = s
            continue
        f = b @ P
        for m in masks:
            nb = f * m
            if depth + 1 <= k:
                nb = nb * keep
            stack.append((depth + 1, nb))
    return best


def periodicity_horizon(n: int, p: float, epsilon: float) -> float:
    q = 1.0 - p ** (n * n)
    if q >= 1.0:
        return math.inf
    return n * n * math.ceil(math.log(epsilon) / math.log(q)) + n


def _check_long_words_periodic(chain, epsilon, p, cap, viol, done, skip):
    n = chain.n
    k = periodicity_horizon(n, p, epsilon)
    top = k + 2 * n + 1
    masks = _masks(chain)
    P = chain.transitions
    frontier = [((a,), chain.initial * m) for a, m in zip(chain.alphabet, masks)]
    depth = 1
    while frontier:
        frontier = [(w, v) for w, v in frontier if v.sum() > epsilon]
        if not frontier:
            return
        if depth > k:
            for w, _ in frontier:
                done["long_words_periodic"] += 1
                if not is_ultimately_periodic(w, int(k), n)[0]:
                    viol["long_words_periodic"] += 1
        if depth >= top:
            return
        if depth >= cap:
            skip["long_words_periodic"] += 1
            return
        nxt = []
        for w, v in frontier:
            f = v @ P
            nxt.extend((w + (a,), f * m) for a, m in zip(chain.alphabet, masks))
        frontier = nxt
        depth += 1


def _check_periodic_prefix_bound(chain, p, rng, viol, done, skip, trials: int = 8):
    n = chain.n
    n2 = n * n
    for _ in range(trials):
        k = int(rng.integers(n, 3 * n2 + n + 1))
        length = k + n + 1 + int(rng.integers(0, 2 * n + 2))
        w = _sample_word(chain, length, rng)
        periodic, _ = is_ultimately_periodic(w, k, n)
        pw = word_probability(chain, w)
        if not periodic or pw <= 0:
            skip["periodic_prefix_bound"] += 1
            continue
        bound = (1.0 - p**n2) ** ((k - n) // n2)
        for j in range(k + n + 1, length + 1):
            px = word_probability(chain, w[:j])
            done["periodic_prefix_bound"] += 1
            if px - pw > bound + TOL or px < pw - 1e-12:
                viol["periodic_prefix_bound"] += 1


def fuzz(count: int = 500, seed: int = 0, n_max: int = 4, p_min: float = 0.1):
    """Check ``count`` random chains; returns aggregate counters and per-chain rows."""
    rng = np.random.default_rng(seed)
    total_v, total_d, total_s = Counter(), Counter(), Counter()
    rows = []
    for i in range(count):
        n = int(rng.integers(1, n_max + 1))
        chain = random_chain(rng, n, int(rng.integers(1, 4)), float(rng.uniform(p_min, 0.5)))
        v, d, s = check_chain(chain, rng)
        total_v.update(v)
        total_d.update(d)
        total_s.update(s)
        rows.append({"index": i, "n": n, "violations": sum(v.values()),
                     "checks": sum(d.values())})
    return {name: total_v[name] for name in CHECK_NAMES}, dict(total_d), dict(total_s), rows
