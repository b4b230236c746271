"""Shared fixtures, hypothesis strategies and brute-force reference oracles."""

import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from tracedist.builtins import fig1
from tracedist.bounds import random_chain

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def chains(draw, n_max=4, n_labels_max=3, p_min=0.1):
    """Random chains via the library generator, driven by a hypothesis-drawn seed."""
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, n_max))
    labels = draw(st.integers(1, n_labels_max))
    p = draw(st.floats(p_min, 0.5))
    rng = np.random.default_rng(seed)
    chain = random_chain(rng, n, labels, p)
    mu = rng.dirichlet(np.ones(n)) if draw(st.booleans()) else chain.initial
    mu = np.where(mu < p, 0.0, mu)
    if mu.sum() == 0:
        return chain
    from tracedist.chain import with_initial

    return with_initial(chain, mu / mu.sum())


def words(chain, k):
    return list(itertools.product(chain.alphabet, repeat=k))


def brute_word_probability(chain, w):
    """Sum over every state path of length |w| whose labels spell w."""
    total = 0.0
    for path in itertools.product(range(chain.n), repeat=len(w)):
        if any(chain.labels[s] != a for s, a in zip(path, w)):
            continue
        p = chain.initial[path[0]]
        for s, t in zip(path, path[1:]):
            p *= chain.transitions[s, t]
        total += p
    return total


def brute_dk(c1, c2, k):
    """max over Sigma^k of |P1(w) - P2(w)| by exhaustive enumeration."""
    alphabet = sorted(set(c1.alphabet) | set(c2.alphabet))
    best = 0.0
    for w in itertools.product(alphabet, repeat=k):
        best = max(best, abs(brute_word_probability(c1, w) - brute_word_probability(c2, w)))
    return best


@pytest.fixture
def fig1_pair():
    return fig1(0.0), fig1(0.1)
