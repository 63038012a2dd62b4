"""coeflab: noise-robust training with meta-learned data coefficients.

A small, fully deterministic laboratory: per-example loss weights and binary
label selections are obtained by differentiating a trusted-probe loss through
a one-step momentum lookahead, combined with pseudo-labeling, a prediction
consistency penalty, and probe-anchored mixup.  Every gradient formula is
hand-derived and checked against finite differences in the test suite.
"""

__version__ = "0.1.0"
