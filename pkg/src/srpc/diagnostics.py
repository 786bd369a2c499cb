"""Likelihood evaluators, DIC, posterior predictive checks, and the exact
enumeration oracle used to validate the sampler on tiny instances.
"""

import dataclasses
import json
import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import linear_sum_assignment
from scipy.special import betaln, gammaln, log_ndtr, logsumexp

from ._backend import kernels
from .data import CELL_MEANS, ChainConfig
from .errors import InsufficientPermutations, ShapeMismatch, TooLarge

LOG_HALF = float(np.log(0.5))


def probit_loglik(xi, W, y):
    """sum y log Phi(W xi) + (1 - y) log(1 - Phi(W xi)); tail-stable."""
    m = np.asarray(W) @ np.asarray(xi)
    y = np.asarray(y)
    return float(np.where(y == 1, log_ndtr(m), log_ndtr(-m)).sum())


def _probit_logfactor(ds, xi, K0, coding=CELL_MEANS):
    """(n, K0) log probit likelihood with the cluster column swapped to each
    candidate cluster.

    Computed without instantiating a sampler so it also works on held-out
    splits where some subpopulation may be unobserved.
    """
    from .data import REFERENCE_CELL

    xi = np.asarray(xi, dtype=np.float64)
    s0 = ds.s - 1
    q = ds.q
    if coding == CELL_MEANS:
        base = xi[s0]
        clust = xi[ds.S : ds.S + K0]
    elif coding == REFERENCE_CELL:
        sub = np.concatenate(([0.0], xi[1 : ds.S]))
        base = xi[0] + sub[s0]
        clust = np.concatenate(([0.0], xi[ds.S : ds.S + K0 - 1]))
    else:
        raise ShapeMismatch(f"unknown coding {coding!r}")
    if q:
        base = base + ds.w_dem @ xi[-q:]
    a = base[:, None] + clust[None, :]
    return np.where(ds.y[:, None] == 1, log_ndtr(a), log_ndtr(-a))


def _safe_log(arr):
    return np.log(np.where(arr > 0, arr, 1.0))


def rpc_joint_loglik(state, ds, xi=None, coding=CELL_MEANS, plugin=False):
    """Joint log-likelihood of the dual-clustering model at one state.

    Mixture form: per subject, log-sum over global clusters of
    pi_h * prod_{j: G=1} theta0 * probit factor, plus the local mixture over
    the G=0 cells. ``plugin=True`` conditions on the sampled C instead
    (the missing-data form used for DIC).
    """
    x0 = np.ascontiguousarray(ds.x - 1, dtype=np.int64)
    s0 = np.ascontiguousarray(ds.s - 1, dtype=np.int64)
    G = np.ascontiguousarray(state.G, dtype=np.uint8)
    K0 = state.pi.size
    xi = state.xi if xi is None else xi
    lt0 = _safe_log(state.theta0)
    lp = _probit_logfactor(ds, xi, K0, coding)
    local = kernels.local_mixture_loglik(x0, G, s0, state.theta1, state.lam)
    if plugin:
        C0 = np.ascontiguousarray(state.C - 1, dtype=np.int64)
        L0 = np.ascontiguousarray(state.L - 1, dtype=np.int64)
        lt1 = _safe_log(state.theta1)
        pred = kernels.assigned_logtheta_sum(x0, G, C0, L0, s0, lt0, lt1)
        return pred + float(lp[np.arange(ds.n), C0].sum())
    logw = kernels.global_logweights(x0, G, lt0)
    logw = logw + _safe_log(state.pi)[None, :] + lp
    return float(logsumexp(logw, axis=1).sum()) + local


def lca_loglik(pi, theta, xi, ds, W):
    """Latent-class log-likelihood: mixture over classes for the predictor
    term, probit response terms added per subject outside the mixture."""
    x0 = np.ascontiguousarray(ds.x - 1, dtype=np.int64)
    G = np.ones_like(x0, dtype=np.uint8)
    logw = kernels.global_logweights(x0, G, _safe_log(np.asarray(theta)))
    logw = logw + _safe_log(np.asarray(pi))[None, :]
    return float(logsumexp(logw, axis=1).sum()) + probit_loglik(xi, W, ds.y)


def dic6(loglik_trace, plugin_loglik):
    """DIC with tripled complexity penalty: -6 mean(trace) + 4 plugin."""
    trace = np.asarray(loglik_trace, dtype=np.float64)
    if trace.size == 0:
        raise ShapeMismatch("empty log-likelihood trace")
    return -6.0 * float(trace.mean()) + 4.0 * float(plugin_loglik)


@dataclasses.dataclass
class FitReport:
    """Deviance summary for one fitted chain.

    ``dbar`` is the posterior mean deviance, ``dplugin`` the deviance at the
    posterior point estimates; dic = 3*dbar - 2*dplugin holds bit-exactly on
    the stored components. Both the conditional (missing-data) and the
    full-mixture variants are reported; ``dic6`` is the conditional one.
    """

    model: str
    dbar: float
    dplugin: float
    dic6: float
    variants: dict  # variant -> {dbar, dplugin, dic6}
    n_iter: int
    burn_in: int

    def to_dict(self):
        return dataclasses.asdict(self)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def _posterior_means(chain):
    means = {k: chain.block(k).mean(axis=0) for k in chain.samples}
    for name in ("pi", "theta0", "theta1", "lam"):
        if name in means:
            means[name] = means[name] / means[name].sum(axis=-1, keepdims=True)
    return means


def _modal_int(block):
    """Per-position most frequent value of an integer sample block."""
    arr = block.astype(np.int64)
    lo, hi = int(arr.min()), int(arr.max())
    flat = arr.reshape(arr.shape[0], -1)
    out = np.empty(flat.shape[1], dtype=np.int64)
    for j in range(flat.shape[1]):
        out[j] = lo + np.bincount(flat[:, j] - lo, minlength=hi - lo + 1).argmax()
    return out.reshape(arr.shape[1:])


def fit_report(chain, ds):
    """Both DIC variants from a chain's retained draws and loglik traces.

    Conditional variant: per-iteration loglik conditions on the sampled
    latent allocations; plugin uses posterior means of the continuous
    parameters with modal latent assignments. Full-mixture variant: the
    mixture loglik trace with a plugin at the same point estimates.
    """
    from .sampler import ChainState

    burn = chain.config.burn_in
    means = _posterior_means(chain)
    n, p = ds.n, ds.p
    K0 = chain.dims["K0"]
    C_mode = _modal_int(chain.block("C"))
    if chain.model == "srpc" and "G" in chain.samples:
        G_mode = _modal_int(chain.block("G")).astype(np.uint8)
        L_mode = _modal_int(chain.block("L"))
        theta1 = means["theta1"]
        lam = means["lam"]
        nu = means["nu"]
        beta = means["beta"]
    else:
        G_mode = np.ones((n, p), dtype=np.uint8)
        L_mode = np.ones((n, p), dtype=np.int64)
        Ks = chain.dims["Ks"]
        dmax = chain.dims["dmax"]
        theta1 = np.full((chain.dims["S"], Ks, p, dmax), 1.0 / dmax)
        lam = np.full((chain.dims["S"], Ks), 1.0 / Ks)
        nu = np.ones((chain.dims["S"], p))
        beta = np.ones(chain.dims["S"])
    state = ChainState(
        C=C_mode,
        L=L_mode,
        G=G_mode,
        pi=means["pi"],
        lam=lam,
        theta0=means["theta0"],
        theta1=theta1,
        nu=nu,
        beta=beta,
        xi=means.get("xi", np.zeros(chain.dims["ncol"])),
        Z=np.zeros(n),
    )
    plug_cond = rpc_joint_loglik(state, ds, coding=chain.coding, plugin=True)
    plug_full = rpc_joint_loglik(state, ds, coding=chain.coding, plugin=False)
    variants = {}
    for name, column, plug in (
        ("conditional", "conditional", plug_cond),
        ("full", "joint", plug_full),
    ):
        trace = chain.loglik(column)[burn:]
        dbar = -2.0 * float(trace.mean())
        dplug = -2.0 * plug
        variants[name] = {"dbar": dbar, "dplugin": dplug, "dic6": 3.0 * dbar - 2.0 * dplug}
    cond = variants["conditional"]
    return FitReport(
        model=chain.model,
        dbar=cond["dbar"],
        dplugin=cond["dplugin"],
        dic6=cond["dic6"],
        variants=variants,
        n_iter=chain.config.n_iter,
        burn_in=burn,
    )


# -- simulation metrics ---------------------------------------------------------


def metrics_mse_sensitivity(truth, phi_hat, nu_hat, assignment):
    """(MSE_outcome, MSE_nu, sensitivity) against simulation ground truth.

    ``truth`` needs .phi (n,), .nu_flags (S, p) with 1 = global, and
    .C_true (n,). Fitted labels are matched to true labels by maximal
    overlap before scoring sensitivity.
    """
    phi_hat = np.asarray(phi_hat, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    phi_true = np.asarray(truth.phi, dtype=np.float64)
    c_true = np.asarray(truth.C_true, dtype=np.int64)
    if phi_hat.shape != phi_true.shape or assignment.shape != c_true.shape:
        raise ShapeMismatch("fit/truth dimension mismatch")
    mse_outcome = float(((phi_hat - phi_true) ** 2).mean())

    mse_nu = math.nan
    if nu_hat is not None:
        nu_true = np.asarray(truth.nu_flags, dtype=np.float64)
        nu_hat = np.asarray(nu_hat, dtype=np.float64)
        if nu_hat.shape != nu_true.shape:
            raise ShapeMismatch("nu dimension mismatch")
        mse_nu = float(((nu_hat - nu_true) ** 2).mean())

    kt = int(c_true.max())
    kf = int(assignment.max())
    N = np.bincount((c_true - 1) * kf + (assignment - 1), minlength=kt * kf).reshape(kt, kf)
    rows, cols = linear_sum_assignment(-N)
    sensitivity = float(N[rows, cols].sum() / c_true.size)
    return mse_outcome, mse_nu, sensitivity


# -- posterior predictive check -------------------------------------------------


def _subset_dataset(ds, idx):
    import copy

    sub = copy.copy(ds)
    sub.x = ds.x[idx]
    sub.s = ds.s[idx]
    sub.y = ds.y[idx]
    sub.w_dem = ds.w_dem[idx]
    sub.n = len(idx)
    return sub


def _point_estimates(chain):
    med = {k: np.median(chain.block(k), axis=0) for k in chain.samples}
    for name in ("pi", "theta0", "theta1", "lam"):
        if name in med:
            med[name] = med[name] / med[name].sum(axis=-1, keepdims=True)
    return med


def _predictor_cell_logmix(ds, med, model):
    """(n, K0) log predictor likelihood per candidate global cluster, with the
    local/global split marginalized for the dual model."""
    x0 = ds.x - 1
    s0 = ds.s - 1
    jj = np.arange(ds.p)[None, :]
    th0 = med["theta0"].transpose(1, 2, 0)[jj, x0]  # (n, p, K0)
    if model == "srpc" and "theta1" in med:
        th1 = med["theta1"].transpose(0, 2, 3, 1)[s0[:, None], jj, x0]  # (n, p, Ks)
        locmix = (med["lam"][s0, None, :] * th1).sum(axis=2)  # (n, p)
        nu = med["nu"][s0]  # (n, p)
        cell = nu[:, :, None] * th0 + (1.0 - nu)[:, :, None] * locmix[:, :, None]
    else:
        cell = th0
    return _safe_log(cell).sum(axis=1)  # (n, K0)


def _deviance_at(ds, med, model, coding):
    """Per-subject deviance at point estimates with clusters assigned by
    maximizing pi-weighted predictor likelihood; returns total deviance."""
    logmix = _predictor_cell_logmix(ds, med, model)
    logpi = _safe_log(med["pi"])
    K0 = logpi.size
    assign = (logmix + logpi[None, :]).argmax(axis=1)
    lp = _probit_logfactor(ds, med["xi"], K0, coding)
    pred = logsumexp(logmix + logpi[None, :], axis=1)
    total = pred.sum() + lp[np.arange(ds.n), assign].sum()
    return -2.0 * float(total)


@dataclasses.dataclass
class PpcReport:
    model: str
    differences: np.ndarray  # per-permutation (test - train) mean deviance
    mean: float
    sd: float
    low: float
    high: float
    r: int
    train_frac: float
    seed: int

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["differences"] = self.differences.tolist()
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def ppc_deviance(ds, model, hyper, config, r=100, train_frac=0.9, seed=0,
                 coding=CELL_MEANS, progress=None):
    """Train/test deviance dispersion over random 90/10 permutations.

    Each permutation refits the model on the train split and compares the
    per-subject deviance of the held-out split (at the train point
    estimates, clusters assigned by maximum predictor likelihood) to the
    train split's own per-subject deviance.
    """
    from .sampler import run_chain, run_lca_chain

    if r < 2:
        raise InsufficientPermutations(f"need at least 2 permutations, got {r}")
    runner = run_chain if model == "srpc" else run_lca_chain
    children = np.random.SeedSequence(seed).spawn(r)
    diffs = np.empty(r)
    n_train = int(round(train_frac * ds.n))
    if n_train < 1 or n_train >= ds.n:
        raise ShapeMismatch("train fraction leaves an empty split")
    for t in range(r):
        rng = np.random.default_rng(children[t])
        while True:
            perm = rng.permutation(ds.n)
            tr, te = perm[:n_train], perm[n_train:]
            if np.unique(ds.s[tr]).size == ds.S:
                break
        ds_tr = _subset_dataset(ds, np.sort(tr))
        ds_te = _subset_dataset(ds, np.sort(te))
        chain = runner(ds_tr, hyper, config, rng=rng, coding=coding)
        med = _point_estimates(chain)
        d_tr = _deviance_at(ds_tr, med, model, coding) / ds_tr.n
        d_te = _deviance_at(ds_te, med, model, coding) / ds_te.n
        diffs[t] = d_te - d_tr
        if progress:
            progress(t + 1, diffs[t])
    return PpcReport(
        model=model,
        differences=diffs,
        mean=float(diffs.mean()),
        sd=float(diffs.std(ddof=1)),
        low=float(diffs.min()),
        high=float(diffs.max()),
        r=r,
        train_frac=train_frac,
        seed=seed,
    )


# -- exact enumeration oracle ---------------------------------------------------


@dataclasses.dataclass
class EnumeratedPosterior:
    coassignment: np.ndarray  # (n, n) exact P(C_i = C_i' | data)
    marginals: np.ndarray  # (n, K0) exact P(C_i = h | data)
    log_evidence: float


def _dirmult_logpmf(counts, conc, m):
    """log Dirichlet-multinomial mass of a count vector under symmetric
    concentration ``conc`` over ``m`` cells (vectorized on leading axes)."""
    total = counts.sum(axis=-1)
    return (
        gammaln(m * conc)
        - gammaln(m * conc + total)
        + gammaln(conc + counts).sum(axis=-1)
        - m * gammaln(conc)
    )


def _all_configs(n_slots, base):
    """(base**n_slots, n_slots) array of all digit strings."""
    count = base**n_slots
    idx = np.arange(count)
    out = np.empty((count, n_slots), dtype=np.int64)
    for s in range(n_slots):
        out[:, s] = (idx // base**s) % base
    return out


def _log_g_prior(gs, n_s, a_beta, b_beta, cache):
    """log P(G column counts for one subpopulation), with nu integrated in
    closed form and beta by adaptive quadrature over its Gamma prior."""
    key = (n_s, tuple(sorted(gs)))
    if key in cache:
        return cache[key]

    def integrand(beta):
        # Gamma(a, rate b) density times prod_j BetaBinomial normalizers,
        # B(1 + g, beta + n_s - g) / B(1, beta) with B(1, beta) = 1/beta.
        logdens = a_beta * math.log(b_beta) - gammaln(a_beta) \
            + (a_beta - 1.0) * math.log(beta) - b_beta * beta
        acc = logdens
        for g in gs:
            acc += betaln(1.0 + g, beta + n_s - g) + math.log(beta)
        return math.exp(acc)

    val, _ = quad(integrand, 0.0, np.inf, limit=200)
    out = math.log(val)
    cache[key] = out
    return out


def enumerate_posterior(ds, hyper, xi=None, coding=CELL_MEANS, limit=10**7):
    """Exact posterior cluster marginals for tiny instances.

    All conjugate blocks (pi, lambda, theta, nu) are integrated analytically;
    beta by quadrature; the latent configurations (C, G, L) are enumerated.
    xi defaults to a fixed zero vector (constant probit factor); a fixed xi
    may be supplied instead.
    """
    n, p, S = ds.n, ds.p, ds.S
    K0, Ks = hyper.K0, hyper.Ks
    size = (K0**n) * (Ks ** (n * p)) * (2 ** (n * p))
    if size > limit:
        raise TooLarge(f"{size} latent configurations exceeds limit {limit}")
    x0 = ds.x - 1
    s0 = ds.s - 1
    d = ds.d
    dmax = int(d.max())
    ns = ds.subpop_sizes()
    cells = [(i, j) for i in range(n) for j in range(p)]

    # log probit factor per (subject, candidate cluster); constant when xi=0.
    if xi is not None and np.any(np.asarray(xi) != 0):
        lp = _probit_logfactor(ds, xi, K0, coding)
    else:
        lp = np.full((n, K0), LOG_HALF)

    # --- L block: lambda term once, per-config (independent of G) -------------
    Lmat = _all_configs(n * p, Ks)  # (nL, n*p)
    nL = Lmat.shape[0]
    lam_counts = np.zeros((nL, S, Ks))
    for c, (i, j) in enumerate(cells):
        np.add.at(lam_counts, (np.arange(nL), s0[i], Lmat[:, c]), 1.0)
    lam_term = np.zeros(nL)
    for s in range(S):
        lam_term += _dirmult_logpmf(lam_counts[:, s, :], hyper.alpha_s, Ks)

    # --- C block: prior term once ---------------------------------------------
    Cmat = _all_configs(n, K0)  # (nC, n)
    nC = Cmat.shape[0]
    c_counts = np.zeros((nC, K0))
    np.add.at(c_counts, (np.repeat(np.arange(nC), n), Cmat.ravel()), 1.0)
    c_prior = _dirmult_logpmf(c_counts, hyper.alpha0, K0)
    c_prior = c_prior + lp[np.arange(n)[None, :], Cmat].sum(axis=1)

    def theta_term(counts, dvec):
        """Sum of per-(cluster, variable) Dirichlet-multinomial masses; counts
        has shape (..., p, dmax) and each variable uses its own d_j."""
        out = np.zeros(counts.shape[:-2])
        for j in range(p):
            out += _dirmult_logpmf(counts[..., j, : dvec[j]], hyper.eta, int(dvec[j]))
        return out

    beta_cache = {}
    logpost_c = np.full(nC, -np.inf)
    for gbits in range(2 ** (n * p)):
        G = np.array([(gbits >> c) & 1 for c in range(n * p)]).reshape(n, p)

        g_term = 0.0
        for s in range(S):
            gs = [int(G[s0 == s, j].sum()) for j in range(p)]
            g_term += _log_g_prior(gs, int(ns[s]), hyper.a_beta, hyper.b_beta, beta_cache)

        # local contribution summed over all L configurations
        t1_counts = np.zeros((nL, S, Ks, p, dmax))
        for c, (i, j) in enumerate(cells):
            if G[i, j] == 0:
                np.add.at(
                    t1_counts,
                    (np.arange(nL), s0[i], Lmat[:, c], j, x0[i, j]),
                    1.0,
                )
        t1 = np.zeros(nL)
        for s in range(S):
            for l in range(Ks):
                t1 += theta_term(t1_counts[:, s, l], d)
        local_sum = logsumexp(lam_term + t1)

        # global contribution per C configuration
        t0_counts = np.zeros((nC, K0, p, dmax))
        for i, j in cells:
            if G[i, j] == 1:
                np.add.at(t0_counts, (np.arange(nC), Cmat[:, i], j, x0[i, j]), 1.0)
        t0 = np.zeros(nC)
        for k in range(K0):
            t0 += theta_term(t0_counts[:, k], d)

        logpost_c = np.logaddexp(logpost_c, g_term + local_sum + c_prior + t0)

    log_evidence = float(logsumexp(logpost_c))
    post = np.exp(logpost_c - log_evidence)

    coassign = np.zeros((n, n))
    marg = np.zeros((n, K0))
    for i in range(n):
        marg[i] = np.bincount(Cmat[:, i], weights=post, minlength=K0)
        for i2 in range(n):
            coassign[i, i2] = post[Cmat[:, i] == Cmat[:, i2]].sum()
    return EnumeratedPosterior(
        coassignment=coassign, marginals=marg, log_evidence=log_evidence
    )
