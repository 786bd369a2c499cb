# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Gibbs sweep hot kernels; mirrors srpc._kernels_py exactly."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

BACKEND = "compiled"


def allocation_probs(cnp.int64_t[:, ::1] x0, cnp.int64_t[::1] C0,
                     cnp.int64_t[:, ::1] L0, cnp.int64_t[::1] s0,
                     double[:, :, ::1] theta0, double[:, :, :, ::1] theta1,
                     double[:, ::1] nu):
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], i, j
    cdef double th0, th1, v
    out_arr = np.empty((n, p), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(p):
            th0 = theta0[C0[i], j, x0[i, j]]
            th1 = theta1[s0[i], L0[i, j], j, x0[i, j]]
            v = nu[s0[i], j]
            out[i, j] = v * th0 / (v * th0 + (1.0 - v) * th1)
    return out_arr


def global_logweights(cnp.int64_t[:, ::1] x0, cnp.uint8_t[:, ::1] G,
                      double[:, :, ::1] logtheta0):
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], K = logtheta0.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    out_arr = np.zeros((n, K), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for k in range(K):
        for i in range(n):
            acc = 0.0
            for j in range(p):
                if G[i, j]:
                    acc += logtheta0[k, j, x0[i, j]]
            out[i, k] = acc
    return out_arr


def local_sample(cnp.int64_t[:, ::1] x0, cnp.uint8_t[:, ::1] G,
                 cnp.int64_t[::1] s0, double[:, :, :, ::1] theta1,
                 double[:, ::1] lam, double[:, ::1] u):
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], Kl = lam.shape[1]
    cdef Py_ssize_t i, j, l, s, pick
    cdef double total, target, cum, w
    cdef double[64] wbuf
    out_arr = np.empty((n, p), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] out = out_arr
    if Kl > 64:
        raise ValueError("local cluster cap above compiled limit 64")
    for i in range(n):
        s = s0[i]
        for j in range(p):
            total = 0.0
            for l in range(Kl):
                if G[i, j]:
                    w = lam[s, l]
                else:
                    w = lam[s, l] * theta1[s, l, j, x0[i, j]]
                wbuf[l] = w
                total += w
            target = u[i, j] * total
            cum = 0.0
            pick = Kl - 1
            for l in range(Kl):
                cum += wbuf[l]
                if cum >= target:
                    pick = l
                    break
            out[i, j] = pick
    return out_arr


def local_mixture_loglik(cnp.int64_t[:, ::1] x0, cnp.uint8_t[:, ::1] G,
                         cnp.int64_t[::1] s0, double[:, :, :, ::1] theta1,
                         double[:, ::1] lam):
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], Kl = lam.shape[1]
    cdef Py_ssize_t i, j, l, s
    cdef double acc = 0.0, mix
    for i in range(n):
        s = s0[i]
        for j in range(p):
            if G[i, j] == 0:
                mix = 0.0
                for l in range(Kl):
                    mix += lam[s, l] * theta1[s, l, j, x0[i, j]]
                acc += log(mix)
    return acc


def assigned_logtheta_sum(cnp.int64_t[:, ::1] x0, cnp.uint8_t[:, ::1] G,
                          cnp.int64_t[::1] C0, cnp.int64_t[:, ::1] L0,
                          cnp.int64_t[::1] s0, double[:, :, ::1] logtheta0,
                          double[:, :, :, ::1] logtheta1):
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], i, j
    cdef double acc = 0.0
    for i in range(n):
        for j in range(p):
            if G[i, j]:
                acc += logtheta0[C0[i], j, x0[i, j]]
            else:
                acc += logtheta1[s0[i], L0[i, j], j, x0[i, j]]
    return acc


def fused_steps123(cnp.int64_t[:, ::1] x0, cnp.int64_t[::1] s0,
                   double[:, :, ::1] theta0, double[:, :, :, ::1] theta1,
                   double[:, :, ::1] logtheta0, double[::1] logpi,
                   double[:, ::1] nu, double[:, ::1] lam,
                   lp_obj, u1_obj, u2_obj, u3_obj, int local_on,
                   cnp.int64_t[::1] C0, cnp.int64_t[:, ::1] L0,
                   cnp.uint8_t[:, ::1] G):
    """Allocation, global-cluster, and local-cluster updates in one pass.

    Mutates C0, L0, G in place; same return tuple and draw semantics as the
    pure-python version.
    """
    cdef Py_ssize_t n = x0.shape[0], p = x0.shape[1], K = logpi.shape[0]
    cdef Py_ssize_t S = lam.shape[0], Ks = lam.shape[1], dmax = theta0.shape[2]
    cdef Py_ssize_t i, j, k, l, s, xv, pick
    cdef int use_lp = lp_obj is not None
    cdef double th0v, th1v, vv, acc, m, ssum, total, target, cum, w, mix
    cdef double pred_mix = 0.0, joint_mix = 0.0, local_mix = 0.0
    cdef double[64] wbuf
    if Ks > 64:
        raise ValueError("local cluster cap above compiled limit 64")

    dummy2 = np.zeros((1, 1))
    cdef double[:, ::1] lp = lp_obj if use_lp else dummy2
    cdef double[::1] u2 = u2_obj
    cdef double[:, ::1] u1 = u1_obj if local_on else dummy2
    cdef double[:, ::1] u3 = u3_obj if local_on else dummy2

    lw_arr = np.empty(K)
    wk_arr = np.empty(K)
    cdef double[::1] lw = lw_arr
    cdef double[::1] wk = wk_arr
    cpi_arr = np.zeros(K, dtype=np.int64)
    clam_arr = np.zeros((S, Ks), dtype=np.int64)
    ct0_arr = np.zeros((K, p, dmax), dtype=np.int64)
    ct1_arr = np.zeros((S, Ks, p, dmax), dtype=np.int64)
    gc_arr = np.zeros((S, p), dtype=np.int64)
    cdef cnp.int64_t[::1] cpi = cpi_arr
    cdef cnp.int64_t[:, ::1] clam = clam_arr
    cdef cnp.int64_t[:, :, ::1] ct0 = ct0_arr
    cdef cnp.int64_t[:, :, :, ::1] ct1 = ct1_arr
    cdef cnp.int64_t[:, ::1] gc = gc_arr

    for i in range(n):
        s = s0[i]
        if local_on:
            for j in range(p):
                xv = x0[i, j]
                th0v = theta0[C0[i], j, xv]
                th1v = theta1[s, L0[i, j], j, xv]
                vv = nu[s, j]
                G[i, j] = 1 if u1[i, j] < vv * th0v / (vv * th0v + (1.0 - vv) * th1v) else 0

        m = -1e308
        for k in range(K):
            acc = logpi[k]
            for j in range(p):
                if G[i, j]:
                    acc += logtheta0[k, j, x0[i, j]]
            lw[k] = acc
            if acc > m:
                m = acc
        ssum = 0.0
        for k in range(K):
            ssum += exp(lw[k] - m)
        pred_mix += m + log(ssum)
        if use_lp:
            m = -1e308
            for k in range(K):
                lw[k] += lp[i, k]
                if lw[k] > m:
                    m = lw[k]
            ssum = 0.0
            for k in range(K):
                wk[k] = exp(lw[k] - m)
                ssum += wk[k]
            joint_mix += m + log(ssum)
        else:
            for k in range(K):
                wk[k] = exp(lw[k] - m)

        total = 0.0
        for k in range(K):
            total += wk[k]
        target = u2[i] * total
        cum = 0.0
        pick = K - 1
        for k in range(K):
            cum += wk[k]
            if cum >= target:
                pick = k
                break
        C0[i] = pick
        cpi[pick] += 1

        if local_on:
            for j in range(p):
                xv = x0[i, j]
                if G[i, j] == 0:
                    mix = 0.0
                    for l in range(Ks):
                        mix += lam[s, l] * theta1[s, l, j, xv]
                    local_mix += log(mix)
                total = 0.0
                for l in range(Ks):
                    if G[i, j]:
                        w = lam[s, l]
                    else:
                        w = lam[s, l] * theta1[s, l, j, xv]
                    wbuf[l] = w
                    total += w
                target = u3[i, j] * total
                cum = 0.0
                pick = Ks - 1
                for l in range(Ks):
                    cum += wbuf[l]
                    if cum >= target:
                        pick = l
                        break
                L0[i, j] = pick
                clam[s, pick] += 1
                if G[i, j]:
                    ct0[C0[i], j, xv] += 1
                    gc[s, j] += 1
                else:
                    ct1[s, pick, j, xv] += 1
        else:
            for j in range(p):
                ct0[C0[i], j, x0[i, j]] += 1

    if not use_lp:
        joint_mix = pred_mix + n * log(0.5)
    return (joint_mix, pred_mix, local_mix, cpi_arr, clam_arr,
            ct0_arr, ct1_arr, gc_arr)
