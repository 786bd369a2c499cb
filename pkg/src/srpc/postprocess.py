"""Posterior post-processing: similarity matrix, dendrogram cut, relabeled
point estimates, modal patterns, and coefficient sign probabilities.

Everything here is a pure function of retained draws, so the fitting engine
stays unaware of reporting conventions. Cluster labels in and out are 1-based.
"""

import dataclasses
import json
import os
import warnings

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import squareform

from .data import CELL_MEANS, REFERENCE_CELL
from .errors import ShapeMismatch

_SIM_MAGIC = "SRPCSIM v1"


@dataclasses.dataclass
class SimilarityMatrix:
    """Pairwise posterior coassignment probabilities.

    ``indices`` lists the subject rows the matrix covers; it is the full
    0..n-1 range unless the subset mode kicked in.
    """

    values: np.ndarray  # (m, m) in [0, 1]
    indices: np.ndarray  # (m,) subject indices into the original dataset
    n_subjects: int

    def save(self, path):
        with open(path, "wb") as fh:
            header = f"{_SIM_MAGIC} m={self.values.shape[0]} n={self.n_subjects}\n"
            fh.write(header.encode())
            fh.write(self.indices.astype(np.int64).tobytes())
            fh.write(self.values.astype(np.float32).tobytes())


def load_similarity(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        parts = dict(kv.split("=") for kv in header.split()[2:])
        if not header.startswith(_SIM_MAGIC):
            raise ShapeMismatch(f"not a similarity file: {path}")
        m, n = int(parts["m"]), int(parts["n"])
        idx = np.frombuffer(fh.read(8 * m), dtype=np.int64).copy()
        vals = np.frombuffer(fh.read(), dtype=np.float32).reshape(m, m).astype(np.float64)
    return SimilarityMatrix(values=vals, indices=idx, n_subjects=n)


@dataclasses.dataclass
class Dendrogram:
    """Agglomerative merge tree in scipy linkage format; empty for n <= 1."""

    Z: np.ndarray  # (n_leaves - 1, 4)
    n_leaves: int


def _coassignment(C_a, C_b):
    """Mean over draws of 1(C_a[:, i] == C_b[:, j]); via per-label matmuls."""
    m = C_a.shape[0]
    out = np.zeros((C_a.shape[1], C_b.shape[1]))
    for k in np.unique(C_a):
        A = (C_a == k).astype(np.float64)
        B = (C_b == k).astype(np.float64)
        out += A.T @ B
    return out / m


def similarity_matrix(C, max_subjects=5000, rng=None):
    """Coassignment fractions over retained draws of C (draws x n, 1-based).

    For n above ``max_subjects`` the matrix is computed on a uniform subject
    subset (``indices`` records which); pass ``max_subjects=None`` to force
    the full matrix.
    """
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ShapeMismatch("C must be (draws, n) with at least one draw")
    n = C.shape[1]
    if max_subjects is not None and n > max_subjects:
        if rng is None:
            rng = np.random.default_rng(0)
        idx = np.sort(rng.choice(n, size=max_subjects, replace=False))
    else:
        idx = np.arange(n)
    sub = C[:, idx]
    vals = _coassignment(sub, sub)
    np.fill_diagonal(vals, 1.0)
    return SimilarityMatrix(values=vals, indices=idx, n_subjects=n)


def complete_linkage(sim):
    """Merge tree on dissimilarity 1 - similarity, complete linkage."""
    m = sim.values.shape[0]
    if m <= 1:
        return Dendrogram(Z=np.empty((0, 4)), n_leaves=m)
    diss = 1.0 - sim.values
    np.fill_diagonal(diss, 0.0)
    diss = np.clip(0.5 * (diss + diss.T), 0.0, None)
    Z = linkage(squareform(diss, checks=False), method="complete")
    return Dendrogram(Z=Z, n_leaves=m)


LARGEST_GAP = "largest-gap"
FIXED_K = "fixed-K"
HEIGHT = "height-h"


def select_num_clusters(dend, rule=LARGEST_GAP, k=None, height=None):
    """Cluster count from the merge tree.

    largest-gap cuts where consecutive merge heights differ most (ties go to
    the smaller count, with a warning); fixed-K and height-h are manual.
    """
    n = dend.n_leaves
    if n == 0:
        raise ShapeMismatch("empty tree")
    if rule == FIXED_K:
        if k is None or not 1 <= k <= max(n, 1):
            raise ShapeMismatch(f"fixed-K needs 1 <= k <= {n}")
        return int(k)
    if n == 1:
        return 1
    h = dend.Z[:, 2]
    if rule == HEIGHT:
        if height is None:
            raise ShapeMismatch("height-h rule needs a height")
        return int(n - np.sum(h <= height))
    if rule != LARGEST_GAP:
        raise ShapeMismatch(f"unknown rule {rule!r}")
    # gap above merge i (0-based) leaves n - (i + 1) clusters; the gap below
    # the first merge corresponds to all-singletons (K = n).
    heights = np.concatenate(([0.0], h))
    gaps = np.diff(heights)
    best = gaps.max()
    ties = np.flatnonzero(gaps >= best - 1e-15)
    pick = int(ties[-1])  # largest index -> fewest clusters
    if ties.size > 1:
        warnings.warn(f"largest-gap tie across {ties.size} cuts; picking K={n - pick}")
    return max(1, n - pick)


def cut_clusters(dend, k):
    """Hard 1-based assignment of the tree's leaves into k groups."""
    if dend.n_leaves <= 1:
        return np.ones(dend.n_leaves, dtype=np.int64)
    if k >= dend.n_leaves:
        return np.arange(1, dend.n_leaves + 1, dtype=np.int64)
    return fcluster(dend.Z, t=k, criterion="maxclust").astype(np.int64)


def extend_assignment(C, sim, sub_labels):
    """Full-length hard assignment from a subset clustering.

    Subjects outside the similarity subset get the cluster whose subset
    members they coassign with most often.
    """
    n = C.shape[1]
    full = np.zeros(n, dtype=np.int64)
    full[sim.indices] = sub_labels
    rest = np.setdiff1d(np.arange(n), sim.indices)
    if rest.size:
        cross = _coassignment(C[:, rest], C[:, sim.indices])  # (rest, m)
        k_star = int(sub_labels.max())
        scores = np.zeros((rest.size, k_star))
        for a in range(1, k_star + 1):
            cols = sub_labels == a
            scores[:, a - 1] = cross[:, cols].mean(axis=1)
        full[rest] = scores.argmax(axis=1) + 1
    return full


def cluster_subjects(C, rule=LARGEST_GAP, k=None, height=None, max_subjects=5000, rng=None):
    """Similarity -> dendrogram -> K* -> full hard assignment, in one call."""
    sim = similarity_matrix(C, max_subjects=max_subjects, rng=rng)
    dend = complete_linkage(sim)
    k_star = select_num_clusters(dend, rule=rule, k=k, height=height)
    sub_labels = cut_clusters(dend, k_star)
    assignment = extend_assignment(np.asarray(C), sim, sub_labels)
    return sim, dend, k_star, assignment


def modal_pattern(theta_med, d=None):
    """Per (cluster, variable) argmax level of the (renormalized) median
    category probabilities; ties break to the smallest level with a warning."""
    theta = np.asarray(theta_med, dtype=np.float64)
    K, p, dmax = theta.shape
    if d is None:
        d = np.full(p, dmax, dtype=np.int64)
    levels = np.zeros((K, p), dtype=np.int64)
    probs = np.zeros((K, p))
    tied = 0
    for j in range(p):
        block = theta[:, j, : d[j]]
        tot = block.sum(axis=1, keepdims=True)
        block = np.where(tot > 0, block / np.where(tot > 0, tot, 1.0), 1.0 / d[j])
        idx = block.argmax(axis=1)
        top = block[np.arange(K), idx]
        tied += int(((block == top[:, None]).sum(axis=1) > 1).sum())
        levels[:, j] = idx + 1
        probs[:, j] = top
    if tied:
        warnings.warn(f"{tied} modal-pattern ties broken to the smallest level")
    return levels, probs


def _match_draw(a_ref, c_draw, k_star, K0):
    """Map each draw label (0-based) to a reference cluster (0-based) by
    maximal overlap; surplus occupied labels fall to their best reference."""
    N = np.bincount((a_ref - 1) * K0 + (c_draw - 1), minlength=k_star * K0)
    N = N.reshape(k_star, K0)
    rows, cols = linear_sum_assignment(-N)
    perm = np.full(K0, -1, dtype=np.int64)
    perm[cols] = rows
    surplus = 0
    for b in np.flatnonzero(perm < 0):
        perm[b] = int(N[:, b].argmax())
        surplus += int(N[:, b].sum() > 0)
    return perm, surplus


def _group_mean(vals, perm, weights, k_star):
    """Weighted within-group mean of per-cluster quantities after relabeling.

    ``vals`` has the cluster axis first; empty groups fall back to a plain
    average so every reference label gets a value.
    """
    out_shape = (k_star,) + vals.shape[1:]
    out = np.zeros(out_shape)
    for a in range(k_star):
        sel = perm == a
        if not sel.any():
            continue
        w = weights[sel]
        tot = w.sum()
        if tot <= 0:
            w = np.ones(sel.sum())
            tot = float(w.size)
        out[a] = np.tensordot(w, vals[sel], axes=(0, 0)) / tot
    return out


@dataclasses.dataclass
class PosteriorSummary:
    k_star: int
    assignment: np.ndarray  # (n,) hard clusters, 1-based
    medians: dict  # block -> relabeled posterior median array
    intervals: dict  # block -> (2, ...) array of 2.5/97.5 percentiles
    modal_levels: np.ndarray  # (K*, p)
    modal_probs: np.ndarray  # (K*, p)
    pr_xi_pos: np.ndarray  # per coefficient Pr(xi_l > 0)
    xi_labels: list
    coding: str

    def to_dict(self):
        return {
            "k_star": self.k_star,
            "assignment": self.assignment.tolist(),
            "medians": {k: v.tolist() for k, v in self.medians.items()},
            "intervals": {k: v.tolist() for k, v in self.intervals.items()},
            "modal_levels": self.modal_levels.tolist(),
            "modal_probs": self.modal_probs.tolist(),
            "pr_xi_pos": self.pr_xi_pos.tolist(),
            "xi_labels": self.xi_labels,
            "coding": self.coding,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def save_modal_csv(self, path):
        with open(path, "w") as fh:
            fh.write("cluster,variable,level,probability\n")
            K, p = self.modal_levels.shape
            for a in range(K):
                for j in range(p):
                    fh.write(
                        f"{a + 1},{j + 1},{self.modal_levels[a, j]},"
                        f"{self.modal_probs[a, j]:.17g}\n"
                    )


def load_summary(path):
    with open(path) as fh:
        doc = json.load(fh)
    return PosteriorSummary(
        k_star=doc["k_star"],
        assignment=np.array(doc["assignment"], dtype=np.int64),
        medians={k: np.array(v) for k, v in doc["medians"].items()},
        intervals={k: np.array(v) for k, v in doc["intervals"].items()},
        modal_levels=np.array(doc["modal_levels"], dtype=np.int64),
        modal_probs=np.array(doc["modal_probs"]),
        pr_xi_pos=np.array(doc["pr_xi_pos"]),
        xi_labels=doc["xi_labels"],
        coding=doc["coding"],
    )


def _relabel_xi_draw(xi, perm, weights, k_star, S, q, coding):
    """Relabel the cluster block of one xi draw into reference-label space.

    cell-means keeps the (subpop, cluster, demographic) layout with the
    cluster block shrunk to K*; reference-cell re-expresses cluster effects
    relative to reference cluster 1 after merging.
    """
    if coding == CELL_MEANS:
        K0 = xi.size - S - q
        clust = _group_mean(xi[S : S + K0], perm, weights, k_star)
        return np.concatenate([xi[:S], clust, xi[xi.size - q :]])
    K0 = xi.size - S - q + 1
    eff = np.concatenate(([0.0], xi[S : S + K0 - 1]))
    merged = _group_mean(eff, perm, weights, k_star)
    return np.concatenate([xi[:S], merged[1:] - merged[0], xi[xi.size - q :]])


def _local_perms(theta1_draws, lam_draws):
    """Per-draw local label matching (per subpop) against the first draw,
    Hungarian on squared theta distance; stabilizes local medians."""
    M, S, Ks = theta1_draws.shape[:3]
    ref = theta1_draws[0]
    perms = np.empty((M, S, Ks), dtype=np.int64)
    flat = theta1_draws.reshape(M, S, Ks, -1)
    rflat = ref.reshape(S, Ks, -1)
    for t in range(M):
        for s in range(S):
            cost = ((flat[t, s][:, None, :] - rflat[s][None, :, :]) ** 2).sum(axis=2)
            rows, cols = linear_sum_assignment(cost)
            perms[t, s, rows] = cols
    return perms


def relabel_and_summarize(chain, assignment, interval=(2.5, 97.5)):
    """Relabel retained draws against a hard reference assignment and compute
    medians, credible intervals, modal patterns, and Pr(xi_l > 0)."""
    assignment = np.asarray(assignment, dtype=np.int64)
    C = chain.block("C").astype(np.int64)
    M, n = C.shape
    if assignment.shape != (n,):
        raise ShapeMismatch(f"assignment has shape {assignment.shape}, expected ({n},)")
    k_star = int(assignment.max())
    K0 = chain.dims["K0"]
    S, q = chain.dims["S"], chain.dims["q"]

    have = set(chain.samples)
    pi = chain.block("pi") if "pi" in have else np.full((M, K0), 1.0 / K0)
    theta0 = chain.block("theta0") if "theta0" in have else None
    xi = chain.block("xi") if "xi" in have else None

    rel = {"pi": np.empty((M, k_star))}
    if theta0 is not None:
        rel["theta0"] = np.empty((M, k_star) + theta0.shape[2:])
    if xi is not None:
        xi_len = S + q + (k_star if chain.coding == CELL_MEANS else k_star - 1)
        rel["xi"] = np.empty((M, xi_len))

    surplus_total = 0
    for t in range(M):
        perm, surplus = _match_draw(assignment, C[t], k_star, K0)
        surplus_total += surplus
        w = pi[t]
        rel["pi"][t] = np.bincount(perm, weights=w, minlength=k_star)
        if theta0 is not None:
            rel["theta0"][t] = _group_mean(theta0[t], perm, w, k_star)
        if xi is not None:
            rel["xi"][t] = _relabel_xi_draw(xi[t], perm, w, k_star, S, q, chain.coding)
    if surplus_total:
        warnings.warn(
            f"{surplus_total} occupied surplus cluster labels merged into their "
            "best-overlap reference cluster"
        )

    if "theta1" in have:
        theta1 = chain.block("theta1")
        lam = chain.block("lam") if "lam" in have else None
        perms = _local_perms(theta1, lam)
        t1 = np.empty_like(theta1)
        for t in range(M):
            for s in range(S):
                t1[t, s, perms[t, s]] = theta1[t, s]
        rel["theta1"] = t1
        if lam is not None:
            lm = np.empty_like(lam)
            for t in range(M):
                for s in range(S):
                    lm[t, s, perms[t, s]] = lam[t, s]
            rel["lam"] = lm
    for name in ("nu", "beta"):
        if name in have:
            rel[name] = chain.block(name)

    medians = {k: np.median(v, axis=0) for k, v in rel.items()}
    lo, hi = interval
    intervals = {
        k: np.stack([np.percentile(v, lo, axis=0), np.percentile(v, hi, axis=0)])
        for k, v in rel.items()
    }

    if theta0 is not None:
        modal_levels, modal_probs = modal_pattern(medians["theta0"])
    else:
        modal_levels = np.zeros((k_star, 0), dtype=np.int64)
        modal_probs = np.zeros((k_star, 0))

    if xi is not None:
        pr_pos = (rel["xi"] > 0).mean(axis=0)
        if chain.coding == CELL_MEANS:
            labels = (
                [f"subpop:{s}" for s in range(1, S + 1)]
                + [f"cluster:{a}" for a in range(1, k_star + 1)]
                + [f"dem:{j}" for j in range(1, q + 1)]
            )
        else:
            labels = (
                ["intercept"]
                + [f"subpop:{s}" for s in range(2, S + 1)]
                + [f"cluster:{a}" for a in range(2, k_star + 1)]
                + [f"dem:{j}" for j in range(1, q + 1)]
            )
    else:
        pr_pos = np.zeros(0)
        labels = []

    return PosteriorSummary(
        k_star=k_star,
        assignment=assignment,
        medians=medians,
        intervals=intervals,
        modal_levels=modal_levels,
        modal_probs=modal_probs,
        pr_xi_pos=pr_pos,
        xi_labels=labels,
        coding=chain.coding,
    )


def outcome_probabilities(summary, ds):
    """Phi(W xi) per subject at the summary's median coefficients, with the
    cluster column taken from the hard assignment."""
    from scipy.special import ndtr

    xi = summary.medians["xi"]
    a = summary.assignment
    S, q = ds.S, ds.q
    if summary.coding == CELL_MEANS:
        lin = xi[ds.s - 1] + xi[S + a - 1]
    else:
        sub = np.concatenate(([0.0], xi[1:S]))
        clust = np.concatenate(([0.0], xi[S : S + summary.k_star - 1]))
        lin = xi[0] + sub[ds.s - 1] + clust[a - 1]
    if q:
        lin = lin + ds.w_dem @ xi[-q:]
    return ndtr(lin)
