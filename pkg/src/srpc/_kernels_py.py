"""Pure-numpy implementations of the Gibbs sweep hot kernels.

Same signatures and draw semantics as the compiled extension
(``srpc._kernels``); all index arguments are 0-based. The compiled and pure
paths consume identical pre-drawn uniforms, so a chain is reproducible under
either backend.
"""

import numpy as np

BACKEND = "python"


def allocation_probs(x0, C0, L0, s0, theta0, theta1, nu):
    """Per-cell probability that variable j of subject i is global.

    p_ij = nu * th0 / (nu * th0 + (1 - nu) * th1) with th0/th1 the category
    probabilities at the observed level under the current assignments.
    """
    n, p = x0.shape
    jj = np.arange(p)[None, :]
    th0 = theta0[C0[:, None], jj, x0]
    th1 = theta1[s0[:, None], L0, jj, x0]
    nu_i = nu[s0, :]
    num = nu_i * th0
    return num / (num + (1.0 - nu_i) * th1)


def global_logweights(x0, G, logtheta0):
    """(n, K) matrix of sum_{j: G_ij=1} log theta0[h, j, x_ij]."""
    n, p = x0.shape
    jj = np.arange(p)[None, :]
    lt = logtheta0[:, jj, x0]  # (K, n, p)
    return np.einsum("knp,np->nk", lt, G.astype(np.float64))


def local_sample(x0, G, s0, theta1, lam, u):
    """Draw every local index L_ij from its categorical conditional.

    Weight of candidate l is lam[s, l] * theta1[s, l, j, x_ij] when the cell
    is locally allocated (G_ij = 0) and lam[s, l] alone when G_ij = 1, so the
    likelihood factor drops out for globally routed cells.
    """
    n, p = x0.shape
    jj = np.arange(p)[None, :]
    th = theta1.transpose(0, 2, 3, 1)[s0[:, None], jj, x0]  # (n, p, Kl)
    w = lam[s0, None, :] * np.where(G[:, :, None] == 1, 1.0, th)
    cum = np.cumsum(w, axis=2)
    target = u * cum[:, :, -1]
    idx = (cum < target[:, :, None]).sum(axis=2)
    return np.minimum(idx, w.shape[2] - 1).astype(np.int64)


def local_mixture_loglik(x0, G, s0, theta1, lam):
    """sum over locally allocated cells of log sum_l lam[s,l]*theta1[s,l,j,x]."""
    n, p = x0.shape
    jj = np.arange(p)[None, :]
    th = theta1.transpose(0, 2, 3, 1)[s0[:, None], jj, x0]
    mix = (lam[s0, None, :] * th).sum(axis=2)
    return float(np.sum(np.log(mix), where=G == 0))


def assigned_logtheta_sum(x0, G, C0, L0, s0, logtheta0, logtheta1):
    """Predictor log-likelihood conditional on the sampled allocations."""
    n, p = x0.shape
    jj = np.arange(p)[None, :]
    lt0 = logtheta0[C0[:, None], jj, x0]
    lt1 = logtheta1[s0[:, None], L0, jj, x0]
    return float(np.where(G == 1, lt0, lt1).sum())


def fused_steps123(x0, s0, theta0, theta1, logtheta0, logpi,
                   nu, lam, lp, u1, u2, u3, local_on, C0, L0, G):
    """Allocation, global-cluster, and local-cluster updates in one pass.

    Mutates C0, L0, G in place and returns the loglik contributions plus all
    sufficient counts for the weight/category/deviation updates:
    (joint_mix, pred_mix, local_mix, counts_pi, counts_lam, counts_theta0,
    counts_theta1, gcounts).
    """
    n, p = x0.shape
    K = logpi.size
    S, Ks = lam.shape
    dmax = theta0.shape[2]

    if local_on:
        probs = allocation_probs(x0, C0, L0, s0, theta0, theta1, nu)
        G[...] = u1 < probs

    logw = global_logweights(x0, G, logtheta0)
    logw += logpi[None, :]
    m = logw.max(axis=1)
    pred_mix = float((m + np.log(np.exp(logw - m[:, None]).sum(axis=1))).sum())
    if lp is None:
        joint_mix = pred_mix + n * np.log(0.5)
    else:
        logw = logw + lp
        m = logw.max(axis=1)
        joint_mix = float((m + np.log(np.exp(logw - m[:, None]).sum(axis=1))).sum())
    w = np.exp(logw - logw.max(axis=1)[:, None])
    cum = np.cumsum(w, axis=1)
    idx = (cum < (u2 * cum[:, -1])[:, None]).sum(axis=1)
    C0[...] = np.minimum(idx, K - 1)

    local_mix = 0.0
    if local_on:
        local_mix = local_mixture_loglik(x0, G, s0, theta1, lam)
        L0[...] = local_sample(x0, G, s0, theta1, lam, u3)

    jj = np.arange(p)[None, :]
    counts_pi = np.bincount(C0, minlength=K)
    flat0 = (C0[:, None] * p + jj) * dmax + x0
    counts_t0 = np.bincount(flat0[G == 1], minlength=K * p * dmax).reshape(K, p, dmax)
    counts_lam = np.zeros((S, Ks), dtype=np.int64)
    counts_t1 = np.zeros((S, Ks, p, dmax), dtype=np.int64)
    gcounts = np.zeros((S, p), dtype=np.int64)
    if local_on:
        flatl = s0[:, None] * Ks + L0
        counts_lam = np.bincount(flatl.ravel(), minlength=S * Ks).reshape(S, Ks)
        flat1 = (flatl * p + jj) * dmax + x0
        counts_t1 = np.bincount(
            flat1[G == 0], minlength=S * Ks * p * dmax
        ).reshape(S, Ks, p, dmax)
        np.add.at(gcounts, s0, G.astype(np.int64))
    return (joint_mix, pred_mix, local_mix, counts_pi, counts_lam,
            counts_t0, counts_t1, gcounts)
