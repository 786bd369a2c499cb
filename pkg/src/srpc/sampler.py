"""Gibbs kernel for the supervised dual global/local clustering model.

One iteration is one full sweep of the eleven update blocks, in order:
global/local allocation, global cluster indices, local cluster indices,
global weights, local weights, category probabilities, deviation
probabilities, Beta-Bernoulli hyperparameters, regression coefficients,
latent probit responses, and the per-iteration likelihood record.

All categorical conditionals over clusters are computed in log space with
max-subtraction; per-cell conditionals (single likelihood factor) are safe in
probability space. The driver pre-draws uniforms from a single generator and
hands them to the backend kernels, so the compiled and pure-python backends
walk the same stream.
"""

import dataclasses
import json
import math
import os

import numpy as np
from scipy.special import log_ndtr

from ._backend import kernels
from .data import CELL_MEANS, REFERENCE_CELL, ChainConfig, Hyperparameters
from .distributions import (
    _TINY,
    _dirichlet_unchecked,
    sample_categorical_rows,
    sample_dirichlet,
    sample_mvn,
    sample_truncated_normal_vec,
)
from .errors import SamplerError

LOGLIK_COLUMNS = ("joint", "conditional", "probit", "predictor_mix")

LOG_HALF = float(np.log(0.5))


@dataclasses.dataclass
class ChainState:
    """One MCMC state; cluster/level indices are 1-based."""

    C: np.ndarray  # (n,) global cluster indices in 1..K0
    L: np.ndarray  # (n, p) local cluster indices in 1..Ks
    G: np.ndarray  # (n, p) global(1)/local(0) allocation
    pi: np.ndarray  # (K0,) global weights
    lam: np.ndarray  # (S, Ks) local weights per subpopulation
    theta0: np.ndarray  # (K0, p, dmax) global category probabilities
    theta1: np.ndarray  # (S, Ks, p, dmax) local category probabilities
    nu: np.ndarray  # (S, p) deviation probabilities
    beta: np.ndarray  # (S,) Beta-Bernoulli hyperparameters
    xi: np.ndarray  # regression coefficients
    Z: np.ndarray  # (n,) latent probit responses
    mu0: np.ndarray = None  # realized prior mean (drawn once)
    Sigma0_diag: np.ndarray = None  # realized prior variances (drawn once)
    xi0: np.ndarray = None  # fixed prior-mean draw used in the xi update

    def check_invariants(self, ds, K0, Ks, atol=1e-10):
        assert self.C.min() >= 1 and self.C.max() <= K0, "C out of range"
        assert self.L.min() >= 1 and self.L.max() <= Ks, "L out of range"
        assert set(np.unique(self.G)) <= {0, 1}, "G not binary"
        assert abs(self.pi.sum() - 1.0) < atol, "pi not a simplex"
        assert np.abs(self.lam.sum(axis=1) - 1.0).max() < atol, "lambda not a simplex"
        for j in range(ds.p):
            dj = ds.d[j]
            assert np.abs(self.theta0[:, j, :dj].sum(axis=-1) - 1.0).max() < atol
            assert np.abs(self.theta1[:, :, j, :dj].sum(axis=-1) - 1.0).max() < atol
        assert np.all((self.nu > 0) & (self.nu < 1)), "nu outside (0,1)"
        assert np.all(self.beta > 0), "beta not positive"
        assert np.all((self.Z > 0) == (ds.y == 1)), "Z sign disagrees with y"
        return True


@dataclasses.dataclass
class ChainOutput:
    """Thinned post-burn-in samples plus per-iteration log-likelihoods."""

    model: str
    samples: dict  # block name -> (n_retained, flat) array
    shapes: dict  # block name -> original per-draw shape
    logliks: np.ndarray  # (n_iter, 4), columns LOGLIK_COLUMNS
    config: ChainConfig
    hyper: Hyperparameters
    dims: dict
    coding: str
    mu0: np.ndarray
    Sigma0_diag: np.ndarray
    xi0: np.ndarray

    @property
    def n_retained(self):
        return next(iter(self.samples.values())).shape[0]

    def block(self, name):
        """Retained draws of one block, reshaped to (n_retained, *shape)."""
        return self.samples[name].reshape((-1,) + tuple(self.shapes[name]))

    def loglik(self, column):
        return self.logliks[:, LOGLIK_COLUMNS.index(column)]


def _dirichlet_rows(conc, valid, rng, no_pad=False):
    """Row-wise Dirichlet draws over the last axis with padded levels zeroed.

    ``valid`` broadcasts against ``conc``; padded positions draw a throwaway
    gamma (keeps the stream shape fixed) and are zeroed before normalizing.
    """
    if no_pad:
        g = rng.standard_gamma(conc)
        g = np.maximum(g, _TINY)
    else:
        g = rng.standard_gamma(np.where(valid, conc, 1.0))
        g = np.maximum(g, _TINY)
        g = np.where(valid, g, 0.0)
    return g / g.sum(axis=-1, keepdims=True)


def _categorical_vector(prob, u):
    cum = np.cumsum(prob)
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    return np.minimum(idx, prob.size - 1)


class GibbsSampler:
    """Mutable sweep engine; owns 0-based working arrays.

    ``local_on=False`` removes the whole local model from both the draw
    schedule and the sweep (the supervised latent-class reduction), which is
    what makes the nu-forced-to-1 equivalence bit-exact.
    """

    def __init__(self, ds, hyper, coding=CELL_MEANS, local_on=True, fix_xi_zero=False):
        ds.validate()
        self.ds = ds
        self.hyper = hyper
        self.coding = coding
        self.local_on = local_on
        self.fix_xi_zero = fix_xi_zero

        self.n, self.p, self.S = ds.n, ds.p, ds.S
        self.K0, self.Ks = hyper.K0, hyper.Ks
        self.dmax = int(ds.d.max())
        self.q = ds.q
        self.x0 = np.ascontiguousarray(ds.x - 1, dtype=np.int64)
        self.s0 = np.ascontiguousarray(ds.s - 1, dtype=np.int64)
        self.y = ds.y.astype(np.int64)
        self.ns = ds.subpop_sizes().astype(np.float64)
        # valid level mask, (p, dmax)
        self.valid = np.arange(self.dmax)[None, :] < ds.d[:, None]
        self._no_pad = bool(self.valid.all())
        self._s_rows = [np.flatnonzero(self.s0 == s) for s in range(self.S)]
        # static part of the flattened (cluster, variable, level) count index
        self._jx = np.arange(self.p)[None, :] * self.dmax + self.x0

        if coding == CELL_MEANS:
            self.ncol = self.S + self.K0 + self.q
        elif coding == REFERENCE_CELL:
            self.ncol = self.S + self.K0 + self.q - 1
        else:
            raise ValueError(f"unknown coding {coding!r}")

    # -- design matrix pieces -------------------------------------------------

    def _design(self, C0):
        W = np.zeros((self.n, self.ncol))
        rows = np.arange(self.n)
        if self.coding == CELL_MEANS:
            W[rows, self.s0] = 1.0
            W[rows, self.S + C0] = 1.0
        else:
            W[:, 0] = 1.0
            W[rows[self.s0 > 0], self.s0[self.s0 > 0]] = 1.0
            W[rows[C0 > 0], self.S + C0[C0 > 0] - 1] = 1.0
        if self.q:
            W[:, -self.q :] = self.ds.w_dem
        return W

    def _linear_base_and_cluster(self, xi):
        """Per-subject linear predictor excluding the cluster term, plus the
        per-candidate cluster effect vector."""
        if self.coding == CELL_MEANS:
            base = xi[self.s0]
            clust = xi[self.S : self.S + self.K0]
        else:
            sub = np.concatenate(([0.0], xi[1 : self.S]))
            base = xi[0] + sub[self.s0]
            clust = np.concatenate(([0.0], xi[self.S : self.S + self.K0 - 1]))
        if self.q:
            base = base + self.ds.w_dem @ xi[-self.q :]
        return base, clust

    # -- initialization -------------------------------------------------------

    def init_state(self, rng):
        h = self.hyper
        pi = sample_dirichlet(np.full(self.K0, h.alpha0), rng)
        theta0 = _dirichlet_rows(
            np.full((self.K0, self.p, self.dmax), h.eta), self.valid, rng
        )
        if self.local_on:
            beta = rng.gamma(h.a_beta, 1.0 / h.b_beta, self.S)
            nu = np.minimum(rng.beta(1.0, beta[:, None], (self.S, self.p)), 1 - 1e-12)
            lam = np.stack(
                [sample_dirichlet(np.full(self.Ks, h.alpha_s), rng) for _ in range(self.S)]
            )
            theta1 = _dirichlet_rows(
                np.full((self.S, self.Ks, self.p, self.dmax), h.eta), self.valid, rng
            )
            G = (rng.random((self.n, self.p)) < nu[self.s0]).astype(np.uint8)
            L0 = kernels.local_sample(
                self.x0,
                np.ones((self.n, self.p), dtype=np.uint8),
                self.s0,
                theta1,
                lam,
                rng.random((self.n, self.p)),
            )
        else:
            beta = np.full(self.S, h.a_beta / h.b_beta)
            nu = np.ones((self.S, self.p))
            lam = np.full((self.S, self.Ks), 1.0 / self.Ks)
            theta1 = np.where(self.valid, 1.0, 0.0) / self.ds.d[:, None]
            theta1 = np.broadcast_to(
                theta1, (self.S, self.Ks, self.p, self.dmax)
            ).copy()
            G = np.ones((self.n, self.p), dtype=np.uint8)
            L0 = np.zeros((self.n, self.p), dtype=np.int64)
        C0 = _categorical_vector(pi, rng.random(self.n))

        mu0 = rng.standard_normal(self.ncol)
        sig0 = 1.0 / rng.gamma(h.a_sigma, 1.0 / h.b_sigma, self.ncol)
        xi0 = mu0 + np.sqrt(sig0) * rng.standard_normal(self.ncol)
        if self.fix_xi_zero:
            xi = np.zeros(self.ncol)
        else:
            xi = mu0 + np.sqrt(sig0) * rng.standard_normal(self.ncol)
        Z = np.where(self.y == 1, 0.5, -0.5)

        self.C0, self.L0, self.G = C0, L0, G
        self.pi, self.lam = pi, lam
        self.theta0, self.theta1 = theta0, theta1
        self.nu, self.beta = nu, beta
        self.xi, self.Z = xi, Z.astype(np.float64)
        self.mu0, self.sig0, self.xi0 = mu0, sig0, xi0
        self._refresh_logs()
        return self.snapshot()

    def _refresh_logs(self):
        self.logpi = np.log(self.pi)
        if self._no_pad:
            self.logtheta0 = np.log(self.theta0)
            self.logtheta1 = np.log(self.theta1)
        else:
            self.logtheta0 = np.log(np.where(self.theta0 > 0, self.theta0, 1.0))
            self.logtheta1 = np.log(np.where(self.theta1 > 0, self.theta1, 1.0))

    def snapshot(self):
        return ChainState(
            C=self.C0 + 1,
            L=self.L0 + 1,
            G=self.G.copy(),
            pi=self.pi.copy(),
            lam=self.lam.copy(),
            theta0=self.theta0.copy(),
            theta1=self.theta1.copy(),
            nu=self.nu.copy(),
            beta=self.beta.copy(),
            xi=self.xi.copy(),
            Z=self.Z.copy(),
            mu0=self.mu0.copy(),
            Sigma0_diag=self.sig0.copy(),
            xi0=self.xi0.copy(),
        )

    def load_state(self, state):
        self.C0 = np.ascontiguousarray(state.C - 1, dtype=np.int64)
        self.L0 = np.ascontiguousarray(state.L - 1, dtype=np.int64)
        self.G = np.ascontiguousarray(state.G, dtype=np.uint8)
        self.pi = state.pi.copy()
        self.lam = state.lam.copy()
        self.theta0 = state.theta0.copy()
        self.theta1 = state.theta1.copy()
        self.nu = state.nu.copy()
        self.beta = state.beta.copy()
        self.xi = state.xi.copy()
        self.Z = state.Z.copy()
        self.mu0 = state.mu0 if state.mu0 is not None else np.zeros(self.ncol)
        self.sig0 = (
            state.Sigma0_diag if state.Sigma0_diag is not None else np.ones(self.ncol)
        )
        self.xi0 = state.xi0 if state.xi0 is not None else self.mu0.copy()
        self._refresh_logs()

    # -- individual update blocks --------------------------------------------

    def step_allocation(self, rng):
        probs = kernels.allocation_probs(
            self.x0, self.C0, self.L0, self.s0, self.theta0, self.theta1, self.nu
        )
        self.G = (rng.random((self.n, self.p)) < probs).astype(np.uint8)

    def _probit_logfactor(self):
        """(n, K0) log probit likelihood with the cluster block swapped to
        each candidate; None when xi is frozen at zero (constant factor)."""
        if self.fix_xi_zero:
            return None
        base, clust = self._linear_base_and_cluster(self.xi)
        a = base[:, None] + clust[None, :]
        return np.where(self.y[:, None] == 1, log_ndtr(a), log_ndtr(-a))

    def step_global(self, rng):
        """Returns (joint-mixture, predictor-mixture) loglik contributions."""
        logw = kernels.global_logweights(self.x0, self.G, self.logtheta0)
        logw += self.logpi[None, :]
        m = logw.max(axis=1)
        pred_mix = float((m + np.log(np.exp(logw - m[:, None]).sum(axis=1))).sum())
        lp = self._probit_logfactor()
        if lp is None:
            joint_mix = pred_mix + self.n * LOG_HALF
        else:
            logw = logw + lp
            m = logw.max(axis=1)
            joint_mix = float((m + np.log(np.exp(logw - m[:, None]).sum(axis=1))).sum())
        self.C0 = sample_categorical_rows(logw, rng.random(self.n)).astype(np.int64)
        return joint_mix, pred_mix

    def step_local(self, rng):
        """Returns the local-mixture loglik contribution."""
        local_mix = kernels.local_mixture_loglik(
            self.x0, self.G, self.s0, self.theta1, self.lam
        )
        self.L0 = kernels.local_sample(
            self.x0, self.G, self.s0, self.theta1, self.lam,
            rng.random((self.n, self.p)),
        )
        return local_mix

    def step_weights(self, rng):
        h = self.hyper
        counts = np.bincount(self.C0, minlength=self.K0)
        self.pi = _dirichlet_unchecked(h.alpha0 + counts, rng)
        if self.local_on:
            for s in range(self.S):
                cs = np.bincount(self.L0[self._s_rows[s]].ravel(), minlength=self.Ks)
                self.lam[s] = _dirichlet_unchecked(h.alpha_s + cs, rng)

    def step_theta(self, rng):
        h = self.hyper
        pd = self.p * self.dmax
        flat0 = self.C0[:, None] * pd + self._jx
        c0 = np.bincount(
            flat0[self.G == 1], minlength=self.K0 * pd
        ).reshape(self.K0, self.p, self.dmax)
        self.theta0 = _dirichlet_rows(h.eta + c0, self.valid, rng, self._no_pad)
        if self.local_on:
            flat1 = (self.s0[:, None] * self.Ks + self.L0) * pd + self._jx
            c1 = np.bincount(
                flat1[self.G == 0], minlength=self.S * self.Ks * pd
            ).reshape(self.S, self.Ks, self.p, self.dmax)
            self.theta1 = _dirichlet_rows(h.eta + c1, self.valid, rng, self._no_pad)
        self._refresh_logs()

    def step_nu_beta(self, rng):
        h = self.hyper
        gc = np.empty((self.S, self.p))
        for s in range(self.S):
            gc[s] = self.G[self._s_rows[s]].sum(axis=0)
        nu = rng.beta(1.0 + gc, self.beta[:, None] + (self.ns[:, None] - gc))
        self.nu = np.minimum(nu, 1.0 - 1e-12)
        rate = h.b_beta - np.log1p(-self.nu).sum(axis=1)
        self.beta = rng.gamma(h.a_beta + self.p, 1.0 / rate)

    def step_probit(self, rng):
        W = self._design(self.C0)
        prec = W.T @ W
        prec[np.diag_indices_from(prec)] += 1.0 / self.sig0
        cov = np.linalg.inv(prec)
        cov = 0.5 * (cov + cov.T)
        mean = cov @ (self.xi0 / self.sig0 + W.T @ self.Z)
        self.xi = sample_mvn(mean, cov, rng)
        m = W @ self.xi
        self.Z = sample_truncated_normal_vec(m, self.y == 1, rng)
        return m

    def probit_loglik_current(self, m=None):
        if self.fix_xi_zero:
            return self.n * LOG_HALF
        if m is None:
            base, clust = self._linear_base_and_cluster(self.xi)
            m = base + clust[self.C0]
        return float(np.where(self.y == 1, log_ndtr(m), log_ndtr(-m)).sum())

    def conditional_loglik_current(self):
        """Predictor loglik given the sampled allocations (no latent priors)."""
        return kernels.assigned_logtheta_sum(
            self.x0, self.G, self.C0, self.L0, self.s0, self.logtheta0, self.logtheta1
        )

    def sweep(self, rng):
        """One full iteration; returns the LOGLIK_COLUMNS tuple.

        Steps 1-3 run as one fused kernel call which also returns the
        sufficient counts for steps 4-8, so the numpy-level work per
        iteration is just the conjugate draws. The driver pre-draws all
        step 1-3 uniforms in a single block.
        """
        h = self.hyper
        lp = self._probit_logfactor()
        n, p = self.n, self.p
        if self.local_on:
            u = rng.random(2 * n * p + n)
            u1 = u[: n * p].reshape(n, p)
            u2 = u[n * p : n * p + n]
            u3 = u[n * p + n :].reshape(n, p)
        else:
            u1 = u3 = None
            u2 = rng.random(n)
        joint_mix, pred_mix, local_mix, c_pi, c_lam, c_t0, c_t1, g_c = (
            kernels.fused_steps123(
                self.x0, self.s0, self.theta0, self.theta1, self.logtheta0,
                self.logpi, self.nu, self.lam, lp, u1, u2, u3,
                1 if self.local_on else 0, self.C0, self.L0, self.G,
            )
        )  # 1-3
        self.pi = _dirichlet_unchecked(h.alpha0 + c_pi, rng)  # 4
        if self.local_on:
            for s in range(self.S):  # 5
                self.lam[s] = _dirichlet_unchecked(h.alpha_s + c_lam[s], rng)
        self.theta0 = _dirichlet_rows(h.eta + c_t0, self.valid, rng, self._no_pad)  # 6
        if self.local_on:
            self.theta1 = _dirichlet_rows(h.eta + c_t1, self.valid, rng, self._no_pad)
        self._refresh_logs()
        if self.local_on:  # 7-8
            nu = rng.beta(1.0 + g_c, self.beta[:, None] + (self.ns[:, None] - g_c))
            self.nu = np.minimum(nu, 1.0 - 1e-12)
            rate = h.b_beta - np.log1p(-self.nu).sum(axis=1)
            self.beta = rng.gamma(h.a_beta + self.p, 1.0 / rate)
        m = self.step_probit(rng) if not self.fix_xi_zero else None  # 9-10
        probit = self.probit_loglik_current(m)  # 11
        cond = self.conditional_loglik_current() + probit
        return joint_mix + local_mix, cond, probit, pred_mix


_BLOCK_GETTERS = {
    "C": lambda sp: sp.C0 + 1,
    "L": lambda sp: sp.L0 + 1,
    "G": lambda sp: sp.G,
    "pi": lambda sp: sp.pi,
    "lam": lambda sp: sp.lam,
    "theta0": lambda sp: sp.theta0,
    "theta1": lambda sp: sp.theta1,
    "nu": lambda sp: sp.nu,
    "beta": lambda sp: sp.beta,
    "xi": lambda sp: sp.xi,
    "Z": lambda sp: sp.Z,
}

_SRPC_BLOCKS = ("C", "L", "G", "pi", "lam", "theta0", "theta1", "nu", "beta", "xi", "Z")
_LCA_BLOCKS = ("C", "pi", "theta0", "xi", "Z")
_INT_BLOCKS = {"C", "L", "G"}


def _run(sampler, config, rng, record_blocks, progress=None, progress_every=0):
    sampler.init_state(rng)
    n_ret = config.n_retained
    store = {name: None for name in record_blocks}  # allocated on first retained draw
    logliks = np.empty((config.n_iter, 4))
    shapes = {}
    r = 0
    for t in range(1, config.n_iter + 1):
        try:
            logliks[t - 1] = sampler.sweep(rng)
        except Exception as exc:  # noqa: BLE001 - annotate with iteration
            raise SamplerError(t, exc) from exc
        if not math.isfinite(float(logliks[t - 1].sum())):
            raise SamplerError(t, "non-finite log-likelihood")
        if progress and progress_every and t % progress_every == 0:
            progress(t, logliks[t - 1, 0])
        if t > config.burn_in and (t - config.burn_in) % config.thin == 0 and r < n_ret:
            for name in record_blocks:
                val = _BLOCK_GETTERS[name](sampler)
                if store[name] is None:
                    shapes[name] = val.shape
                    dtype = np.int32 if name in _INT_BLOCKS else np.float64
                    store[name] = np.empty((n_ret, val.size), dtype=dtype)
                store[name][r] = val.ravel()
            r += 1
    dims = {
        "n": sampler.n,
        "p": sampler.p,
        "S": sampler.S,
        "K0": sampler.K0,
        "Ks": sampler.Ks,
        "dmax": sampler.dmax,
        "q": sampler.q,
        "ncol": sampler.ncol,
    }
    return ChainOutput(
        model="srpc" if sampler.local_on else "slca",
        samples=store,
        shapes=shapes,
        logliks=logliks,
        config=config,
        hyper=sampler.hyper,
        dims=dims,
        coding=sampler.coding,
        mu0=sampler.mu0,
        Sigma0_diag=sampler.sig0,
        xi0=sampler.xi0,
    )


def _effective_hyper(hyper, config):
    if config.fixed_K0 is None or config.fixed_K0 == hyper.K0:
        return hyper
    return dataclasses.replace(hyper, K0=config.fixed_K0, alpha0=1.0 / config.fixed_K0)


def run_chain(
    ds,
    hyper,
    config,
    rng=None,
    coding=CELL_MEANS,
    force_global=False,
    fix_xi_zero=False,
    record_blocks=_SRPC_BLOCKS,
    progress=None,
    progress_every=0,
):
    """Run the full dual-clustering chain; deterministic under a fixed seed.

    ``force_global`` pins nu to 1 and prunes every local draw from the
    schedule, reducing the kernel to the supervised latent-class sweep.
    """
    from .distributions import make_rng

    hyper = _effective_hyper(hyper, config)
    if rng is None:
        rng = make_rng(config.seed)
    sampler = GibbsSampler(
        ds, hyper, coding=coding, local_on=not force_global, fix_xi_zero=fix_xi_zero
    )
    if force_global:
        record_blocks = tuple(b for b in record_blocks if b in _LCA_BLOCKS)
    out = _run(sampler, config, rng, record_blocks, progress, progress_every)
    out.model = "srpc"
    return out


def run_lca_chain(
    ds,
    hyper,
    config,
    rng=None,
    coding=CELL_MEANS,
    fix_xi_zero=False,
    record_blocks=_LCA_BLOCKS,
    progress=None,
    progress_every=0,
):
    """Supervised latent-class baseline: the same sweep with all variables
    routed globally and no local machinery."""
    from .distributions import make_rng

    hyper = _effective_hyper(hyper, config)
    if rng is None:
        rng = make_rng(config.seed)
    sampler = GibbsSampler(ds, hyper, coding=coding, local_on=False, fix_xi_zero=fix_xi_zero)
    return _run(sampler, config, rng, record_blocks, progress, progress_every)


def init_chain(ds, hyper, rng, coding=CELL_MEANS):
    """Draw a fresh state from the priors; satisfies every state invariant."""
    return GibbsSampler(ds, hyper, coding=coding).init_state(rng)


def _step_wrapper(method):
    def op(state, ds, hyper, rng, coding=CELL_MEANS):
        sampler = GibbsSampler(ds, hyper, coding=coding)
        sampler.load_state(state)
        getattr(sampler, method)(rng)
        return sampler.snapshot()

    return op


update_allocation = _step_wrapper("step_allocation")
update_global_clusters = _step_wrapper("step_global")
update_local_clusters = _step_wrapper("step_local")
update_weights = _step_wrapper("step_weights")
update_theta = _step_wrapper("step_theta")
update_nu_beta = _step_wrapper("step_nu_beta")
update_probit = _step_wrapper("step_probit")


# -- serialization ------------------------------------------------------------


def save_chain(out, out_dir):
    """Write a chain as a directory: samples/<block>.csv (one row per
    retained draw, blocks flattened in C order), loglik.csv, meta.json."""
    os.makedirs(os.path.join(out_dir, "samples"), exist_ok=True)
    for name, arr in out.samples.items():
        fmt = "%d" if name in _INT_BLOCKS else "%.17g"
        np.savetxt(os.path.join(out_dir, "samples", f"{name}.csv"), arr, fmt=fmt, delimiter=",")
    np.savetxt(
        os.path.join(out_dir, "loglik.csv"),
        out.logliks,
        fmt="%.17g",
        delimiter=",",
        header=",".join(LOGLIK_COLUMNS),
        comments="",
    )
    meta = {
        "model": out.model,
        "coding": out.coding,
        "dims": out.dims,
        "shapes": {k: list(v) for k, v in out.shapes.items()},
        "config": dataclasses.asdict(out.config),
        "hyperparameters": dataclasses.asdict(out.hyper),
        "mu0": out.mu0.tolist(),
        "Sigma0_diag": out.Sigma0_diag.tolist(),
        "xi0": out.xi0.tolist(),
    }
    with open(os.path.join(out_dir, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)


def load_chain(out_dir):
    with open(os.path.join(out_dir, "meta.json")) as fh:
        meta = json.load(fh)
    samples = {}
    shapes = {k: tuple(v) for k, v in meta["shapes"].items()}
    for name in shapes:
        arr = np.loadtxt(
            os.path.join(out_dir, "samples", f"{name}.csv"), delimiter=",", ndmin=2
        )
        samples[name] = arr.astype(np.int32) if name in _INT_BLOCKS else arr
    logliks = np.loadtxt(os.path.join(out_dir, "loglik.csv"), delimiter=",", skiprows=1, ndmin=2)
    return ChainOutput(
        model=meta["model"],
        samples=samples,
        shapes=shapes,
        logliks=logliks,
        config=ChainConfig(**meta["config"]),
        hyper=Hyperparameters(**meta["hyperparameters"]),
        dims=meta["dims"],
        coding=meta["coding"],
        mu0=np.array(meta["mu0"]),
        Sigma0_diag=np.array(meta["Sigma0_diag"]),
        xi0=np.array(meta["xi0"]),
    )
