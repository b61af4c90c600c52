"""Pure numpy implementations of the hot loops in :mod:`proxkdr._ckernels`."""
import numpy as np


def sq_dists(a, b):
    aa = np.einsum("ij,ij->i", a, a)
    bb = np.einsum("ij,ij->i", b, b)
    d = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    # cancellation in the norm expansion can leave tiny negatives
    np.maximum(d, 0.0, out=d)
    return d


def gaussian_gram(a, b, gamma):
    d = sq_dists(a, b)
    np.multiply(d, -gamma, out=d)
    return np.exp(d, out=d)


def gaussian_expand(queries, centers, weights, gamma):
    return gaussian_gram(queries, centers, gamma) @ weights


def epanechnikov(u, h_bw):
    t = u / h_bw
    return np.where(np.abs(t) <= 1.0, 0.75 * (1.0 - t * t) / h_bw, 0.0)
