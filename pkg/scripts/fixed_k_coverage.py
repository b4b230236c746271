"""Coverage of the fixed-length estimator on the two-state pair (k = 2, eps = 0.02)."""

from _common import run

if __name__ == "__main__":
    run("fixed-k-coverage", __doc__, replications=200, k=2, epsilon=0.02, alpha=0.05)
