"""Supervised robust profile clustering: dual global/local categorical
clustering tied to a binary outcome through probit regression."""

from ._backend import backend_name
from .data import (
    CELL_MEANS,
    REFERENCE_CELL,
    ChainConfig,
    Dataset,
    Hyperparameters,
    Schema,
    build_design_matrix,
    default_cluster_cap,
    load_config,
    load_dataset,
    save_dataset,
)
from .diagnostics import (
    EnumeratedPosterior,
    FitReport,
    PpcReport,
    dic6,
    enumerate_posterior,
    fit_report,
    lca_loglik,
    metrics_mse_sensitivity,
    ppc_deviance,
    probit_loglik,
    rpc_joint_loglik,
)
from .postprocess import (
    Dendrogram,
    PosteriorSummary,
    SimilarityMatrix,
    cluster_subjects,
    complete_linkage,
    cut_clusters,
    load_similarity,
    load_summary,
    modal_pattern,
    outcome_probabilities,
    relabel_and_summarize,
    select_num_clusters,
    similarity_matrix,
)
from .sampler import (
    ChainOutput,
    ChainState,
    GibbsSampler,
    init_chain,
    load_chain,
    run_chain,
    run_lca_chain,
    save_chain,
)
from .simgen import SimConfig, Truth, default_truth_tables, generate, load_truth

__version__ = "0.1.0"
