"""Branching/determinism classification, lassos, B^k/D^k path mass and BSCCs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .chain import ChainError, MarkovChain, as_word, format_word


@dataclass
class StateClassification:
    state: str
    branching_threshold: int | None  # None means deterministic
    witness_words: tuple = ()
    lasso: tuple | None = None  # (z, u)

    @property
    def deterministic(self) -> bool:
        return self.branching_threshold is None

    def to_dict(self) -> dict:
        d = {
            "state": self.state,
            "branching_threshold": (
                "deterministic" if self.deterministic else self.branching_threshold
            ),
            "witness_words": [format_word(w) for w in self.witness_words],
        }
        if self.lasso is not None:
            z, u = self.lasso
            d["lasso"] = {"z": format_word(z), "u": format_word(u)}
        return d


@dataclass
class PathPartitionMass:
    b_mass: float
    d_mass: float

    @property
    def total(self) -> float:
        return self.b_mass + self.d_mass


@dataclass
class BSCC:
    states: tuple
    pathological: bool
    reachable: bool


@dataclass
class BSCCReport:
    components: list = field(default_factory=list)

    @property
    def pathological(self) -> bool:
        return any(c.pathological and c.reachable for c in self.components)

    def flagged(self) -> list:
        return [c for c in self.components if c.pathological]


def word_levels(chain: MarkovChain, s, k_max: int):
    """Yield, for k = 1..k_max, the map word -> reachable state set from ``s``.

    Only positive-probability words appear.  The generator stops early once
    more than one word is present (the state is then branching for every
    larger k).
    """
    i = chain.index(s)
    succ = [np.nonzero(row > 0)[0] for row in chain.transitions]
    level = {(chain.labels[i],): frozenset([i])}
    yield 1, level
    for k in range(2, k_max + 1):
        nxt: dict = {}
        for w, states in level.items():
            for q in states:
                for t in succ[q]:
                    nxt.setdefault(w + (chain.labels[t],), set()).add(int(t))
        level = {w: frozenset(v) for w, v in nxt.items()}
        yield k, level
        if len(level) > 1:
            return


def _sort_key(chain: MarkovChain):
    pos = {a: i for i, a in enumerate(chain.alphabet)}
    return lambda w: [pos[a] for a in w]


def classify_state(chain: MarkovChain, s, k_max: int | None = None) -> StateClassification:
    """Smallest branching horizon of ``s``, or a lasso if ``s`` is deterministic.

    A state that stays deterministic for n^2 steps is deterministic forever,
    so the breadth-first search never goes deeper than n^2.
    """
    n2 = chain.n ** 2
    if k_max is None:
        k_max = n2
    if k_max < n2:
        raise ChainError(f"k_max must be at least n^2 = {n2}")
    chain.index(s)
    for k, level in word_levels(chain, s, n2):
        if len(level) > 1:
            words = sorted(level, key=_sort_key(chain))
            return StateClassification(s, k, (words[0], words[1]))
    return StateClassification(s, None, (), _lasso_unchecked(chain, s))


def is_k_branching(chain: MarkovChain, s, k: int) -> bool:
    for j, level in word_levels(chain, s, k):
        if len(level) > 1:
            return True
    return False


def deterministic_mask(chain: MarkovChain) -> np.ndarray:
    """Boolean vector: state is n^2-deterministic."""
    n2 = chain.n ** 2
    return np.array([not is_k_branching(chain, s, n2) for s in chain.states])


def _lasso_unchecked(chain: MarkovChain, s):
    path = [chain.index(s)]
    seen = {path[0]: 0}
    while True:
        nxt = int(np.nonzero(chain.transitions[path[-1]] > 0)[0][0])
        if nxt in seen:
            start = seen[nxt]
            break
        seen[nxt] = len(path)
        path.append(nxt)
    z = tuple(chain.labels[q] for q in path[:start])
    u = tuple(chain.labels[q] for q in path[start:])
    return minimize_lasso(z, u)


def minimize_lasso(z: tuple, u: tuple):
    """Primitive period for ``u`` and the shortest ``z`` describing the same word."""
    m = len(u)
    for d in range(1, m + 1):
        if m % d == 0 and u[:d] * (m // d) == u:
            u = u[:d]
            break
    while z and z[-1] == u[-1]:
        z = z[:-1]
        u = u[-1:] + u[:-1]
    return z, u


def extract_lasso(chain: MarkovChain, s):
    """(z, u) with P^s(z u^omega) = 1 for a deterministic state ``s``."""
    cls = classify_state(chain, s)
    if not cls.deterministic:
        raise ChainError(
            f"state {s!r} is {cls.branching_threshold}-branching; no lasso exists"
        )
    return cls.lasso


def path_partition_mass(chain: MarkovChain, w, k: int, det: np.ndarray | None = None):
    """Split P(w) into paths whose first min(k, |w|) states all branch (B) and the rest (D)."""
    w = as_word(w, chain.alphabet)
    if not w:
        raise ChainError("word must have length >= 1")
    if k < 0:
        raise ChainError("k must be nonnegative")
    if det is None:
        det = deterministic_mask(chain)
    detf = det.astype(float)
    P = chain.transitions
    b = chain.initial * chain.label_mask(w[0])
    d = np.zeros(chain.n)
    if k >= 1:
        d = b * detf
        b = b * (1.0 - detf)
    for step, a in enumerate(w[1:], start=2):
        mask = chain.label_mask(a)
        b = (b @ P) * mask
        d = (d @ P) * mask
        if step <= k:
            moved = b * detf
            d = d + moved
            b = b - moved
    return PathPartitionMass(float(b.sum()), float(d.sum()))


def is_ultimately_periodic(w, k: int, n: int):
    """Whether the part of ``w`` after position ``k`` is a prefix of u^omega, |u| <= n.

    Returns ``(flag, u)``.  Among valid periods the shortest is returned, which
    is also the lexicographically smallest since every candidate is a prefix of
    the suffix.
    """
    w = as_word(w)
    if not w:
        raise ChainError("word must have length >= 1")
    suffix = w[k:] if k >= 0 else w
    if not suffix:
        return True, (min(w),)
    for d in range(1, min(n, len(suffix)) + 1):
        if all(suffix[i] == suffix[i % d] for i in range(d, len(suffix))):
            return True, suffix[:d]
    return False, None


def bottom_sccs(chain: MarkovChain):
    adj = csr_matrix(chain.transitions > 0)
    ncomp, comp = connected_components(adj, connection="strong")
    members = [np.nonzero(comp == c)[0] for c in range(ncomp)]
    bottoms = []
    for c, idx in enumerate(members):
        succ = np.nonzero(chain.transitions[idx].sum(axis=0) > 0)[0]
        if np.all(comp[succ] == c):
            bottoms.append(idx)
    return bottoms


def reachable_states(chain: MarkovChain) -> np.ndarray:
    seen = chain.initial > 0
    frontier = seen.copy()
    while frontier.any():
        nxt = (chain.transitions[frontier].sum(axis=0) > 0) & ~seen
        seen |= nxt
        frontier = nxt
    return seen


def pathological_bsccs(chain: MarkovChain) -> BSCCReport:
    """Bottom SCCs; a component is pathological when all its states are deterministic."""
    det = deterministic_mask(chain)
    reach = reachable_states(chain)
    comps = []
    for idx in bottom_sccs(chain):
        comps.append(
            BSCC(
                states=tuple(chain.states[i] for i in idx),
                pathological=bool(det[idx].all()),
                reachable=bool(reach[idx].any()),
            )
        )
    return BSCCReport(comps)


def analyze(chain: MarkovChain) -> dict:
    """JSON-ready classification report used by the ``analyze`` command."""
    report = pathological_bsccs(chain)
    return {
        "n": chain.n,
        "alphabet": list(chain.alphabet),
        "states": [classify_state(chain, s).to_dict() for s in chain.states],
        "bsccs": [
            {"states": list(c.states), "pathological": c.pathological, "reachable": c.reachable}
            for c in report.components
        ],
        "pathological": report.pathological,
    }
