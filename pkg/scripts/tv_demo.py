"""Probability gap of the 'at most c_n b's' event between the tau = 0 and tau chains."""

from _common import run

if __name__ == "__main__":
    run("tv-demo", __doc__, tau=0.1, steps=[25, 100, 400, 1600])
