"""Finite-trace distance estimates for identical chains and the tau = 0.1 pair."""

from _common import run

if __name__ == "__main__":
    run("unbounded-fig1", __doc__, replications=20, pmin=0.4, n=2, delta=0.2, alpha=0.1)
