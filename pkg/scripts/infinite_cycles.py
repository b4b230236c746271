"""Infinite-trace distance between the 'ab' and 'aa' deterministic cycles."""

from _common import run

if __name__ == "__main__":
    run("infinite-cycles", __doc__, replications=5, pmin=0.5, n=2, delta=0.2)
