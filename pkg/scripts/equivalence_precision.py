"""Black-box equivalence via grid-exact learning (g = 0.1)."""

from _common import run

if __name__ == "__main__":
    run("equivalence-precision", __doc__, replications=100, grid=0.1)
