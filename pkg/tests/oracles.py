"""Independent reference computations shared by several test files."""

import itertools
import math

import numpy as np


def rb_price_gauss_hermite(d, r0=0.1, sigma=0.01, nodes=10):
    """Bond price by a tensor Gauss-Hermite rule over the d normal increments.

    Walks the path explicitly with a Python loop over time steps, independent
    of the vectorised model code.
    """
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    total = 0.0
    for idx in itertools.product(range(nodes), repeat=d):
        weight = 1.0
        rate, brownian, disc = r0, 0.0, 1.0 / (1.0 + r0)
        for k, i in enumerate(idx, start=1):
            weight *= w[i]
            brownian += x[i]
            rate = r0 * math.exp(sigma * brownian - 0.5 * sigma**2 * k)
            disc /= 1.0 + rate
        total += weight * disc
    return total
