"""Seeded random samplers and density kernels used by every Gibbs step.

All samplers take an explicit ``numpy.random.Generator`` so that a chain owns
exactly one stream and identical seeds reproduce identical draw sequences.
"""

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .errors import BadConcentration, BadParameter, DegenerateWeights, NotPSD

# Smallest positive normal double; gamma draws below this are clamped before
# normalization so tiny Dirichlet concentrations (alpha = 1/K) cannot produce
# an exact-zero simplex coordinate.
_TINY = np.finfo(np.float64).tiny

# Truncation points deeper than this many s.d. into the tail switch from
# inverse-CDF to exponential rejection sampling.
_TAIL_CUTOFF = 4.0


def make_rng(seed):
    """Deterministic generator; identical seed -> identical draw sequence."""
    return np.random.default_rng(np.random.PCG64(seed))


def std_normal_cdf(z):
    """Standard normal CDF, stable in both tails."""
    return ndtr(z)


def log_std_normal_cdf(z):
    return log_ndtr(z)


def _dirichlet_unchecked(conc, rng):
    """Hot-path Dirichlet draw; caller guarantees positive concentrations."""
    g = rng.standard_gamma(conc)
    g = np.maximum(g, _TINY)
    return g / g.sum()


def sample_dirichlet(conc, rng):
    """Draw from Dirichlet(conc) as normalized gammas.

    Zero-valued gamma draws (underflow at very small concentrations) are
    clamped to the smallest positive normal double before normalization.
    """
    conc = np.asarray(conc, dtype=np.float64)
    if conc.size == 0 or np.any(conc <= 0) or not np.all(np.isfinite(conc)):
        raise BadConcentration(f"concentrations must be positive, got {conc}")
    return _dirichlet_unchecked(conc, rng)


def sample_categorical(weights, rng):
    """Index k with probability w_k / sum(w); weights need not be normalized.

    Returns a 0-based index.
    """
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DegenerateWeights(f"weights must be finite and nonnegative, got {w}")
    total = w.sum()
    if total <= 0:
        raise DegenerateWeights("all weights are zero")
    cum = np.cumsum(w)
    return int(np.searchsorted(cum, rng.random() * total, side="right").clip(0, w.size - 1))


def sample_categorical_rows(log_w, u):
    """One categorical draw per row of a matrix of log-weights.

    ``u`` is a vector of uniforms (one per row), so the caller controls the
    stream; computed in probability space after max-subtraction. Returns
    0-based indices.
    """
    m = log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w - m)
    cum = np.cumsum(w, axis=1)
    total = cum[:, -1]
    target = u * total
    idx = (cum < target[:, None]).sum(axis=1)
    return np.minimum(idx, log_w.shape[1] - 1)


def sample_beta(a, b, rng):
    if a <= 0 or b <= 0:
        raise BadParameter(f"Beta parameters must be positive, got ({a}, {b})")
    return float(rng.beta(a, b))


def sample_gamma(shape, rate, rng):
    """Gamma with *rate* parameterization: mean shape/rate."""
    if shape <= 0 or rate <= 0:
        raise BadParameter(f"Gamma parameters must be positive, got ({shape}, {rate})")
    return float(rng.gamma(shape, 1.0 / rate))


def _truncnorm_lower_std(a, rng):
    """Standard normal truncated to (a, inf), vectorized over `a`.

    Inverse-CDF for moderate truncation; Robert's exponential rejection when
    the truncation point is more than _TAIL_CUTOFF s.d. into the upper tail.
    """
    a = np.asarray(a, dtype=np.float64)
    out = np.empty_like(a)

    easy = a < _TAIL_CUTOFF
    if easy.any():
        ae = a[easy]
        lo = ndtr(ae)
        u = rng.random(ae.shape)
        arg = np.clip(lo + u * (1.0 - lo), _TINY, 1.0 - 1e-16)
        t = ndtri(arg)
        out[easy] = np.maximum(t, np.nextafter(ae, np.inf))

    hard = ~easy
    if hard.any():
        ah = a[hard]
        alpha = 0.5 * (ah + np.sqrt(ah * ah + 4.0))
        vals = np.empty_like(ah)
        todo = np.ones(ah.shape, dtype=bool)
        while todo.any():
            n_todo = int(todo.sum())
            z = ah[todo] - np.log(rng.random(n_todo)) / alpha[todo]
            accept = rng.random(n_todo) <= np.exp(-0.5 * (z - alpha[todo]) ** 2)
            pos = np.flatnonzero(todo)[accept]
            vals[pos] = z[accept]
            todo[pos] = False
        out[hard] = vals
    return out


def sample_truncated_normal_vec(means, positive_side, rng):
    """N(mean, 1) truncated to (0, inf) where positive_side, (-inf, 0] otherwise.

    Strict sign contract holds for |mean| far into either tail.
    """
    means = np.asarray(means, dtype=np.float64)
    pos = np.asarray(positive_side, dtype=bool)
    signed_mean = np.where(pos, means, -means)
    t = _truncnorm_lower_std(-signed_mean, rng)
    draw = signed_mean + t
    draw = np.maximum(draw, _TINY)  # strict positivity even after rounding
    return np.where(pos, draw, -draw)


def sample_truncated_normal(mean, positive_side, rng):
    """Scalar form of :func:`sample_truncated_normal_vec`."""
    return float(sample_truncated_normal_vec(np.array([mean]), np.array([positive_side]), rng)[0])


def sample_mvn(mean, cov, rng):
    """Draw from N(mean, cov) via a symmetric factorization with jitter fallback."""
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (mean.size, mean.size):
        raise NotPSD(f"covariance shape {cov.shape} does not match mean size {mean.size}")
    if not np.allclose(cov, cov.T, atol=1e-10):
        raise NotPSD("covariance is not symmetric")
    if not cov.any():
        return mean.copy()
    z = rng.standard_normal(mean.size)
    try:
        chol = np.linalg.cholesky(cov)
        return mean + chol @ z
    except np.linalg.LinAlgError:
        pass
    scale = max(np.abs(np.diag(cov)).max(), 1.0)
    for jitter in (1e-12, 1e-10, 1e-8):
        try:
            chol = np.linalg.cholesky(cov + jitter * scale * np.eye(mean.size))
            return mean + chol @ z
        except np.linalg.LinAlgError:
            continue
    # PSD but badly conditioned: eigendecomposition with small negatives clipped.
    w, v = np.linalg.eigh(cov)
    if w.min() < -1e-8 * max(w.max(), 1.0):
        raise NotPSD(f"covariance has negative eigenvalue {w.min()}")
    root = v * np.sqrt(np.clip(w, 0.0, None))
    return mean + root @ z
