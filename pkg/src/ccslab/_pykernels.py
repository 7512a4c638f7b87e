"""Vectorised numpy versions of the particle kernels in ``_ckernels.pyx``."""

import numpy as np


def pairwise_sq_dists(x, y):
    diff = x[:, None, :] - y[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def svgd_phi(edited, source, h):
    """Update direction at every particle, queried at the particles themselves.

    Row ``i`` is ``1/N sum_j [K(x_j, x_i) (x_j - z_j) + grad_{x_j} K(x_j, x_i)]``.
    """
    n = edited.shape[0]
    inv_h2 = 1.0 / (h * h)
    # k[j, i] = K(x_j, x_i)
    k = np.exp(-0.5 * inv_h2 * pairwise_sq_dists(edited, edited))
    attraction = k.T @ (edited - source)
    # grad_{x_j} K(x_j, x_i) = -(x_j - x_i) / h^2 * K(x_j, x_i)
    ksum = k.sum(axis=0)
    repulsion = -inv_h2 * (k.T @ edited - ksum[:, None] * edited)
    return (attraction + repulsion) / n


def mmd2_unbiased(a, b, h):
    """U-statistic estimate of squared MMD.

    Equal-size sets drop the paired cross terms ``K(a_i, b_i)`` as well, so the
    estimate is exactly zero when ``a`` and ``b`` coincide.
    """
    m, n = a.shape[0], b.shape[0]
    scale = -0.5 / (h * h)
    kaa = np.exp(scale * pairwise_sq_dists(a, a))
    kbb = np.exp(scale * pairwise_sq_dists(b, b))
    kab = np.exp(scale * pairwise_sq_dists(a, b))
    saa = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
    sbb = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
    if m == n:
        sab = (kab.sum() - np.trace(kab)) / (m * (m - 1))
    else:
        sab = kab.mean()
    return float(saa + sbb - 2.0 * sab)
