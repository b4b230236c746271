"""Labelled Markov chains: representation, parsing and exact word probabilities.

A chain carries one opaque label per state.  Words are tuples of labels; the
helper :func:`as_word` accepts plain strings for single-character alphabets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

STOCHASTIC_TOL = 1e-9
KAHAN_THRESHOLD = 10_000

Word = tuple  # tuple[str, ...]


class ChainError(ValueError):
    """Invalid chain document or chain operation."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkovChain:
    states: tuple
    labels: tuple  # labels[i] is the label of states[i]
    transitions: np.ndarray
    initial: np.ndarray
    alphabet: tuple = ()
    pmin: float | None = None
    name: str | None = None
    _index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "transitions", _freeze(self.transitions))
        object.__setattr__(self, "initial", _freeze(self.initial))
        alphabet = list(self.alphabet)
        for lab in self.labels:
            if lab not in alphabet:
                alphabet.append(lab)
        object.__setattr__(self, "alphabet", tuple(alphabet))
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})
        _validate(self)

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, state) -> int:
        try:
            return self._index[state]
        except KeyError:
            raise ChainError(f"unknown state {state!r}") from None

    def label_of(self, state) -> str:
        return self.labels[self.index(state)]

    @property
    def label_index(self) -> np.ndarray:
        """Alphabet index of every state's label."""
        pos = {a: i for i, a in enumerate(self.alphabet)}
        return np.array([pos[lab] for lab in self.labels], dtype=np.int64)

    def label_mask(self, symbol) -> np.ndarray:
        return np.array([lab == symbol for lab in self.labels], dtype=float)

    def min_positive_transition(self) -> float:
        P = self.transitions
        return float(P[P > 0].min())

    def effective_pmin(self) -> float:
        """Declared p_min, or the smallest positive transition entry."""
        if self.pmin is not None:
            return float(self.pmin)
        return self.min_positive_transition()

    def __eq__(self, other):
        if not isinstance(other, MarkovChain):
            return NotImplemented
        return (
            self.states == other.states
            and self.labels == other.labels
            and self.alphabet == other.alphabet
            and self.pmin == other.pmin
            and np.array_equal(self.transitions, other.transitions)
            and np.array_equal(self.initial, other.initial)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        doc = {
            "states": list(self.states),
            "labels": {s: lab for s, lab in zip(self.states, self.labels)},
            "alphabet": list(self.alphabet),
            "initial": {s: float(p) for s, p in zip(self.states, self.initial) if p > 0},
            "transitions": {
                s: {t: float(p) for t, p in zip(self.states, row) if p > 0}
                for s, row in zip(self.states, self.transitions)
            },
        }
        if self.pmin is not None:
            doc["pmin"] = self.pmin
        if self.name is not None:
            doc["name"] = self.name
        return doc


def _validate(chain: MarkovChain) -> None:
    n = len(chain.states)
    if n == 0:
        raise ChainError("chain has no states")
    if len(set(chain.states)) != n:
        raise ChainError("duplicate state identifiers")
    if len(chain.labels) != n:
        raise ChainError("labels must have one entry per state")
    P, mu = chain.transitions, chain.initial
    if P.shape != (n, n):
        raise ChainError(f"transitions must be {n}x{n}, got {P.shape}")
    if mu.shape != (n,):
        raise ChainError(f"initial must have length {n}, got {mu.shape}")
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(mu))):
        raise ChainError("non-finite probability")
    for i, row in enumerate(P):
        if np.any(row < 0) or np.any(row > 1):
            raise ChainError(f"transitions row {chain.states[i]!r}: entries must lie in [0,1]")
        if abs(row.sum() - 1.0) > STOCHASTIC_TOL:
            raise ChainError(
                f"transitions row {chain.states[i]!r} sums to {row.sum():.12g}, expected 1"
            )
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > STOCHASTIC_TOL:
        raise ChainError(f"initial distribution sums to {mu.sum():.12g}, expected 1")
    if chain.pmin is not None:
        p = chain.pmin
        if not 0 < p <= 1:
            raise ChainError(f"pmin must lie in (0,1], got {p}")
        for i, row in enumerate(P):
            bad = row[(row > 0) & (row < p - STOCHASTIC_TOL)]
            if bad.size:
                raise ChainError(
                    f"transitions row {chain.states[i]!r}: entry {bad[0]:.12g} below pmin {p}"
                )
        bad = mu[(mu > 0) & (mu < p - STOCHASTIC_TOL)]
        if bad.size:
            raise ChainError(f"initial: entry {bad[0]:.12g} below pmin {p}")


def from_matrix(
    labels: Sequence[str],
    transitions,
    initial="stationary",
    *,
    states: Sequence[str] | None = None,
    alphabet: Sequence[str] = (),
    pmin: float | None = None,
    name: str | None = None,
) -> MarkovChain:
    """Build a chain from dense arrays; ``initial`` may be ``"stationary"``."""
    n = len(labels)
    if states is None:
        states = [f"s{i}" for i in range(n)]
    P = np.asarray(transitions, dtype=float)
    if isinstance(initial, str):
        if initial != "stationary":
            raise ChainError(f"unknown initial directive {initial!r}")
        mu = np.full(n, 1.0 / n)
        draft = MarkovChain(states, labels, P, mu, alphabet=alphabet, name=name)
        mu = stationary_distribution(draft)
    else:
        mu = np.asarray(initial, dtype=float)
    return MarkovChain(states, labels, P, mu, alphabet=alphabet, pmin=pmin, name=name)


def parse_chain(text: str | Mapping) -> MarkovChain:
    """Parse and validate a JSON chain document (string or decoded mapping)."""
    if isinstance(text, (str, bytes)):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ChainError(f"not valid JSON: {e}") from None
    else:
        doc = text
    if not isinstance(doc, Mapping):
        raise ChainError("chain document must be a JSON object")
    for key in ("states", "labels", "initial", "transitions"):
        if key not in doc:
            raise ChainError(f"missing field {key!r}")
    states = doc["states"]
    if not isinstance(states, list) or not states or not all(isinstance(s, str) for s in states):
        raise ChainError("field 'states' must be a non-empty list of strings")
    index = {s: i for i, s in enumerate(states)}
    if len(index) != len(states):
        raise ChainError("field 'states' contains duplicates")
    n = len(states)

    labels_doc = doc["labels"]
    if not isinstance(labels_doc, Mapping):
        raise ChainError("field 'labels' must map state -> label")
    labels = []
    for s in states:
        if s not in labels_doc:
            raise ChainError(f"labels: no label for state {s!r}")
        lab = labels_doc[s]
        if not isinstance(lab, str) or not lab:
            raise ChainError(f"labels[{s!r}] must be a non-empty string")
        labels.append(lab)
    for s in labels_doc:
        if s not in index:
            raise ChainError(f"labels: undeclared state {s!r}")

    alphabet = doc.get("alphabet", [])
    if not isinstance(alphabet, list) or not all(isinstance(a, str) for a in alphabet):
        raise ChainError("field 'alphabet' must be a list of strings")
    if alphabet:
        for s, lab in zip(states, labels):
            if lab not in alphabet:
                raise ChainError(f"labels[{s!r}]: label {lab!r} not declared in alphabet")

    P = np.zeros((n, n))
    trans = doc["transitions"]
    if not isinstance(trans, Mapping):
        raise ChainError("field 'transitions' must map state -> {state: probability}")
    for s, row in trans.items():
        if s not in index:
            raise ChainError(f"transitions: undeclared state {s!r}")
        if not isinstance(row, Mapping):
            raise ChainError(f"transitions[{s!r}] must be an object")
        for t, p in row.items():
            if t not in index:
                raise ChainError(f"transitions[{s!r}]: undeclared target state {t!r}")
            P[index[s], index[t]] = _prob(p, f"transitions[{s!r}][{t!r}]")
    for s in states:
        if s not in trans:
            raise ChainError(f"transitions: missing row for state {s!r}")

    pmin = doc.get("pmin")
    if pmin is not None:
        pmin = _prob(pmin, "pmin")

    init = doc["initial"]
    if init == "stationary":
        mu = "stationary"
    elif isinstance(init, Mapping):
        mu = np.zeros(n)
        for s, p in init.items():
            if s not in index:
                raise ChainError(f"initial: undeclared state {s!r}")
            mu[index[s]] = _prob(p, f"initial[{s!r}]")
    else:
        raise ChainError("field 'initial' must be an object or \"stationary\"")

    return from_matrix(
        labels, P, mu, states=states, alphabet=alphabet, pmin=pmin, name=doc.get("name")
    )


def _prob(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ChainError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ChainError(f"{where}: probability {value} outside [0,1]")
    return value


def load_chain(path) -> MarkovChain:
    with open(path) as fh:
        return parse_chain(fh.read())


def dump_chain(chain: MarkovChain) -> str:
    return json.dumps(chain.to_dict(), indent=2)


def as_word(w, alphabet: Sequence[str] | None = None) -> Word:
    """Normalise ``w`` to a tuple of labels.

    Strings are split on whitespace when they contain any, otherwise into
    characters.
    """
    if isinstance(w, str):
        w = tuple(w.split()) if any(c.isspace() for c in w) else tuple(w)
    else:
        w = tuple(w)
    if alphabet is not None:
        for a in w:
            if a not in alphabet:
                raise ChainError(f"symbol {a!r} not in alphabet {list(alphabet)}")
    return w


def format_word(w: Iterable[str]) -> str:
    w = tuple(w)
    if all(len(a) == 1 for a in w):
        return "".join(w)
    return " ".join(w)


def step_forward(chain: MarkovChain, alpha: np.ndarray, mask: np.ndarray, compensated=False):
    """One forward step: ``(alpha @ P) * mask``."""
    if not compensated:
        return (alpha @ chain.transitions) * mask
    total = np.zeros(chain.n)
    comp = np.zeros(chain.n)
    for j in np.nonzero(alpha)[0]:
        y = alpha[j] * chain.transitions[j] - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total * mask


def forward(chain: MarkovChain, w) -> np.ndarray:
    """Vector of P(path labelled ``w`` ending in state s)."""
    w = as_word(w, chain.alphabet)
    if not w:
        raise ChainError("word must have length >= 1")
    compensated = chain.n * len(w) > KAHAN_THRESHOLD
    alpha = chain.initial * chain.label_mask(w[0])
    for a in w[1:]:
        if not alpha.any():
            break
        alpha = step_forward(chain, alpha, chain.label_mask(a), compensated)
    return alpha


def word_probability(chain: MarkovChain, w) -> float:
    """P(w), the probability that a run starts with label word ``w``."""
    w = as_word(w, chain.alphabet)
    alpha = forward(chain, w)
    if chain.n * len(w) > KAHAN_THRESHOLD:
        return math.fsum(alpha)
    return float(alpha.sum())


def is_irreducible(chain: MarkovChain) -> bool:
    ncomp, _ = connected_components(csr_matrix(chain.transitions > 0), connection="strong")
    return ncomp == 1


def stationary_distribution(chain: MarkovChain) -> np.ndarray:
    """Stationary vector of an irreducible chain, by direct linear solve."""
    if not is_irreducible(chain):
        raise ChainError("stationary distribution requires an irreducible chain")
    n = chain.n
    A = chain.transitions.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise ChainError("singular system while solving for the stationary distribution") from None
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = np.abs(pi @ chain.transitions - pi).max()
    if residual > 1e-12:
        # one refinement step for ill-conditioned rows
        pi = pi @ chain.transitions
        pi /= pi.sum()
    return pi


def with_initial(chain: MarkovChain, dist) -> MarkovChain:
    """Copy of ``chain`` with a new initial distribution.

    ``dist`` may be a vector, a mapping state -> probability, or a state id
    (meaning the point mass on that state).
    """
    if isinstance(dist, Mapping):
        mu = np.zeros(chain.n)
        for s, p in dist.items():
            mu[chain.index(s)] = p
    elif isinstance(dist, str):
        mu = np.zeros(chain.n)
        mu[chain.index(dist)] = 1.0
    else:
        mu = np.asarray(dist, dtype=float)
        if mu.shape != (chain.n,):
            raise ChainError(f"initial distribution must have length {chain.n}, got {mu.shape}")
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > STOCHASTIC_TOL:
        raise ChainError("not a probability vector")
    return MarkovChain(
        chain.states, chain.labels, chain.transitions, mu,
        alphabet=chain.alphabet, pmin=chain.pmin, name=chain.name,
    )


def point_mass(chain: MarkovChain, state) -> MarkovChain:
    mu = np.zeros(chain.n)
    mu[chain.index(state)] = 1.0
    return with_initial(chain, mu)


def shared_alphabet(c1: MarkovChain, c2: MarkovChain) -> tuple:
    if c1.alphabet != c2.alphabet:
        if set(c1.alphabet) == set(c2.alphabet):
            return c1.alphabet
        raise ChainError(
            f"alphabet mismatch: {list(c1.alphabet)} vs {list(c2.alphabet)}"
        )
    return c1.alphabet
