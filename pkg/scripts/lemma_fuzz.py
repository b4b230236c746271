"""Structural bound checks on random chains with at most four states."""

from _common import run

if __name__ == "__main__":
    run("lemma-fuzz", __doc__, chains=500, n=4, pmin=0.1)
