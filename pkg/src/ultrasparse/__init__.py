"""Circulant covariance estimation with random ultra-sparse rulers.

Modules:

* ``rulers``: classic and randomized sparse rulers and their unions
* ``hashing``: frequency hashing, permutations and candidate voting
* ``sfft``: hashing-based sparse FFT over permuted prefix reads
* ``estimator``: autocovariance averaging and the circulant estimator
* ``synth``: synthetic truths, ruler-restricted Gaussian samples, noise
* ``music``: MUSIC baseline under three sampling schemes
* ``experiments``: seeded sweeps and CSV output
"""

__version__ = "0.1.0"
