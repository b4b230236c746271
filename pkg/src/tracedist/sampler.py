"""Black-box simulation of run prefixes and multinomial trace counts.

Every batch draws from its own Philox stream keyed by
``(master seed, stream id, batch index)``, so a batch is reproducible no matter
which order or thread produced it.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainError, MarkovChain, format_word


def stream_key(stream) -> int:
    """Stable integer id for a named stream."""
    if isinstance(stream, (int, np.integer)):
        return int(stream)
    digest = hashlib.blake2b(str(stream).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(seed: int, stream=0, batch: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_key(stream), int(batch)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SampleBatch:
    alphabet: tuple
    symbols: np.ndarray  # (count, length) alphabet indices
    states: np.ndarray | None = None  # (count, length) state indices, state-observable mode
    seed_lineage: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.symbols.shape[1]

    @property
    def count(self) -> int:
        return self.symbols.shape[0]

    @property
    def traces(self) -> list:
        alpha = self.alphabet
        return [tuple(alpha[i] for i in row) for row in self.symbols]

    def lines(self) -> list:
        return [format_word(w) for w in self.traces]


def simulate(chain: MarkovChain, length: int, count: int, rng: np.random.Generator,
             alphabet: tuple | None = None):
    """State and symbol arrays of ``count`` independent run prefixes."""
    if length < 1:
        raise ValueError("length must be >= 1")
    alphabet = chain.alphabet if alphabet is None else alphabet
    pos = {a: i for i, a in enumerate(alphabet)}
    lab = np.array([pos[x] for x in chain.labels], dtype=np.int8 if len(alphabet) < 128 else np.int32)
    cum = np.cumsum(chain.transitions, axis=1)
    cum[:, -1] = 1.0
    cum0 = np.cumsum(chain.initial)
    cum0[-1] = 1.0
    n = chain.n
    dtype = np.int16 if n < 2**15 else np.int32
    steps = np.empty((length, count), dtype=dtype)
    if count:
        u = rng.random((length, count))
        cur = np.minimum(np.searchsorted(cum0, u[0], side="right"), n - 1)
        steps[0] = cur
        if n <= 16:
            # next state = number of cumulative thresholds at or below u
            cols = [np.ascontiguousarray(cum[:, j]) for j in range(n - 1)]
            for t in range(1, length):
                nxt = np.zeros(count, dtype=np.intp)
                for col in cols:
                    nxt += u[t] >= col.take(cur)
                cur = nxt
                steps[t] = cur
        else:
            # row i of the shifted table spans (i, i + 1]
            shifted = (cum + np.arange(n)[:, None]).ravel()
            offsets = np.arange(n) * n
            for t in range(1, length):
                idx = np.searchsorted(shifted, cur + u[t], side="right")
                cur = np.minimum(idx - offsets[cur], n - 1)
                steps[t] = cur
    states = np.ascontiguousarray(steps.T)
    return states, lab[states]


class Sampler:
    """Handle on a chain that only reveals sampled runs.

    ``observe_states`` exposes state paths; the distance estimators never use
    them and only the finite-precision learner requires them.
    """

    def __init__(self, chain: MarkovChain, seed: int = 0, stream="chain",
                 observe_states: bool = False, alphabet: tuple | None = None):
        self._chain = chain
        self.seed = int(seed)
        self.stream = stream
        self.observe_states = observe_states
        self.alphabet = tuple(chain.alphabet if alphabet is None else alphabet)
        missing = set(chain.alphabet) - set(self.alphabet)
        if missing:
            raise ChainError(f"alphabet lacks chain labels {sorted(missing)}")
        self.batches_drawn = 0
        self.traces_drawn = 0

    @property
    def n_states(self) -> int:
        if not self.observe_states:
            raise ChainError("state count is hidden in label-only mode")
        return self._chain.n

    @property
    def state_names(self) -> tuple:
        if not self.observe_states:
            raise ChainError("states are hidden in label-only mode")
        return self._chain.states

    def state_labels(self) -> tuple:
        if not self.observe_states:
            raise ChainError("states are hidden in label-only mode")
        return self._chain.labels

    def draw(self, length: int, count: int) -> SampleBatch:
        batch = self.batches_drawn
        rng = make_rng(self.seed, self.stream, batch)
        states, symbols = simulate(self._chain, length, count, rng, self.alphabet)
        self.batches_drawn += 1
        self.traces_drawn += count
        return SampleBatch(
            alphabet=self.alphabet,
            symbols=symbols,
            states=states if self.observe_states else None,
            seed_lineage={"seed": self.seed, "stream": str(self.stream), "batch": batch},
        )


def sample(chain: MarkovChain, length: int, count: int, seed: int = 0, stream="chain",
           batch: int = 0, observe_states: bool = False) -> SampleBatch:
    """One reproducible batch of ``count`` run prefixes of the given length."""
    rng = make_rng(seed, stream, batch)
    states, symbols = simulate(chain, length, count, rng)
    return SampleBatch(
        alphabet=chain.alphabet,
        symbols=symbols,
        states=states if observe_states else None,
        seed_lineage={"seed": int(seed), "stream": str(stream), "batch": int(batch)},
    )


@dataclass
class TraceCounts:
    length: int
    counts1: Counter
    counts2: Counter
    alphabet: tuple = ()

    @property
    def n1(self) -> int:
        return sum(self.counts1.values())

    @property
    def n2(self) -> int:
        return sum(self.counts2.values())

    def words(self) -> list:
        return sorted(set(self.counts1) | set(self.counts2))

    def merge(self, other: "TraceCounts") -> "TraceCounts":
        if other.length != self.length:
            raise ValueError(f"length mismatch: {self.length} vs {other.length}")
        alphabet = self.alphabet or other.alphabet
        return TraceCounts(self.length, self.counts1 + other.counts1,
                           self.counts2 + other.counts2, alphabet)

    def __eq__(self, other):
        if not isinstance(other, TraceCounts):
            return NotImplemented
        return (self.length == other.length and +self.counts1 == +other.counts1
                and +self.counts2 == +other.counts2)


def count_traces(batch1: SampleBatch, batch2: SampleBatch) -> TraceCounts:
    if batch1.length != batch2.length:
        raise ValueError(f"length mismatch: {batch1.length} vs {batch2.length}")
    alphabet = batch1.alphabet if batch1.count or not batch2.count else batch2.alphabet
    return TraceCounts(batch1.length, Counter(batch1.traces), Counter(batch2.traces), alphabet)


def prefix_counts(counts: TraceCounts, i: int) -> TraceCounts:
    """Marginal counts of length-i prefixes."""
    if not 1 <= i <= counts.length:
        raise ValueError(f"prefix length {i} outside 1..{counts.length}")
    c1, c2 = Counter(), Counter()
    for w, c in counts.counts1.items():
        c1[w[:i]] += c
    for w, c in counts.counts2.items():
        c2[w[:i]] += c
    return TraceCounts(i, c1, c2, counts.alphabet)
