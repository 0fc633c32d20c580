"""Independent reference computations used by the tests.

Nothing here imports the code under test beyond plain data containers.
"""

import numpy as np
import mpmath


def dense_ppr(indptr, indices, target, alpha, iters=2000, tol=1e-15):
    """Personalized PageRank by power iteration on the dense transition matrix.

    pi = alpha * e_target + (1 - alpha) * pi @ P, P row-stochastic; a node
    with no neighbours keeps its mass (self-loop).
    """
    V = len(indptr) - 1
    P = np.zeros((V, V))
    for u in range(V):
        nb = indices[indptr[u]:indptr[u + 1]]
        if len(nb) == 0:
            P[u, u] = 1.0
        else:
            P[u, nb] = 1.0 / len(nb)
    e = np.zeros(V)
    e[target] = 1.0
    pi = e.copy()
    for _ in range(iters):
        nxt = alpha * e + (1 - alpha) * pi @ P
        if np.max(np.abs(nxt - pi)) < tol:
            pi = nxt
            break
        pi = nxt
    return pi


def softmax_mse_mp(sums, target, dps=50):
    """Softmax + mean squared error against a one-hot target in mpmath."""
    with mpmath.workdps(dps):
        s = [mpmath.mpf(float(x)) for x in sums]
        m = max(s)
        e = [mpmath.exp(x - m) for x in s]
        z = mpmath.fsum(e)
        p = [x / z for x in e]
        C = len(s)
        return float(mpmath.fsum((p[c] - (1 if c == target else 0)) ** 2 for c in range(C)) / C)


def gaussian_waist(z, w0, wavelength):
    """1/e^2 intensity radius of a Gaussian beam after distance z."""
    zr = np.pi * w0 ** 2 / wavelength
    return w0 * np.sqrt(1 + (z / zr) ** 2)


def second_moment_waist(intensity, pitch):
    """Waist from the second moment: for exp(-2 r^2 / w^2), <x^2> = w^2 / 4."""
    n = intensity.shape[0]
    x = (np.arange(n) - n // 2) * pitch
    total = intensity.sum()
    mx = (intensity.sum(axis=0) * x ** 2).sum() / total
    my = (intensity.sum(axis=1) * x ** 2).sum() / total
    return 2 * np.sqrt(mx), 2 * np.sqrt(my)


def principal_angles(a, b):
    """Principal angles between the column spaces of a and b (radians)."""
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    # arcsin of the orthogonal residual is accurate for tiny angles
    resid = qb - qa @ (qa.T @ qb)
    sin = np.linalg.svd(resid, compute_uv=False)
    return np.arcsin(np.clip(sin, 0.0, 1.0))
