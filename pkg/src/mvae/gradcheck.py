"""Central finite differences, used as an independent oracle for autograd."""

import numpy as np

DEFAULT_STEP = 1e-5
# coordinates whose gradient is below this are compared absolutely
RELATIVE_FLOOR = 1e-6


def finite_difference(f, arrays, h=DEFAULT_STEP):
    """d f / d array for every array in ``arrays``, perturbing entries in place.

    ``f`` takes no arguments and returns a float; it must read the arrays
    by reference.  Every entry is restored after its two evaluations.
    """
    out = []
    for a in arrays:
        g = np.zeros_like(a)
        for i in np.ndindex(a.shape):
            orig = a[i]
            a[i] = orig + h
            fp = f()
            a[i] = orig - h
            fm = f()
            a[i] = orig
            g[i] = (fp - fm) / (2 * h)
        out.append(g)
    return out


def relative_errors(analytic, numeric, floor=RELATIVE_FLOOR):
    """Per-coordinate |a - n| / max(|a|, |n|, floor), flattened across arrays."""
    a = np.concatenate([np.ravel(x) for x in analytic])
    n = np.concatenate([np.ravel(x) for x in numeric])
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
