"""Estimating trace distances between labelled Markov chains from simulation runs."""

from .chain import (
    ChainError,
    MarkovChain,
    as_word,
    format_word,
    from_matrix,
    load_chain,
    parse_chain,
    stationary_distribution,
    with_initial,
    word_probability,
)
from .builtins import builtin_chain, fig1, fig3, resolve_chain

__version__ = "0.1.0"
