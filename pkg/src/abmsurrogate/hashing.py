"""Counter-based uniform variates (SplitMix64 finaliser chained over integer keys).

A variate is a pure function of its integer coordinates, e.g.
``(seed, tag, t, agent)``, so results do not depend on evaluation order.
"""
import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_TO_UNIT = 2.0**-53

# Stream tags.
NODE = 1
EXPLORE = 2
STEP = 3
POISSON = 4
NOISE = 5
SIGNAL = 6
SUBSAMPLE = 7


@njit(cache=True)
def mix(h, v):
    z = h ^ np.uint64(v)
    z = z + _GOLDEN
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True)
def to_unit(h):
    return float(h >> _S11) * _TO_UNIT


@njit(cache=True)
def uniform3(seed, tag, a):
    return to_unit(mix(mix(mix(np.uint64(0), seed), tag), a))


@njit(cache=True)
def uniform4(seed, tag, a, b):
    return to_unit(mix(mix(mix(mix(np.uint64(0), seed), tag), a), b))


@njit(cache=True)
def uniform5(seed, tag, a, b, c):
    return to_unit(mix(mix(mix(mix(mix(np.uint64(0), seed), tag), a), b), c))
