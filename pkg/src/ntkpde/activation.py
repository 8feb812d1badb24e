"""Cubic-ReLU activation and its derivatives.

``sigma(z) = max(z, 0)**3 / 6`` is the activation whose second derivative is
the plain ReLU, which keeps second-order operators applied to the network
inside the class of two-layer networks.
"""

import numpy as np


def sigma(z):
    r = np.maximum(z, 0.0)
    return r * r * r / 6.0


def sigma_p(z):
    r = np.maximum(z, 0.0)
    return r * r / 2.0


def sigma_pp(z):
    return np.maximum(z, 0.0)


def sigma_ppp(z):
    # value at the kink is 0 by convention
    return np.where(np.asarray(z) > 0.0, 1.0, 0.0)
