"""Command-line front end: simulate, fit, summarize, compare, ppc.

Every command is deterministic given (inputs, seed); each output directory
carries a manifest recording the command, config snapshot, input hashes, and
timings. Progress goes to stderr; machine-readable output never mixes with it.
"""

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .data import (
    CELL_MEANS,
    REFERENCE_CELL,
    ChainConfig,
    Hyperparameters,
    default_cluster_cap,
    load_config,
    load_dataset,
    save_dataset,
)
from .diagnostics import fit_report, metrics_mse_sensitivity, ppc_deviance
from .errors import SamplerError, ShapeMismatch, SrpcError
from .postprocess import (
    FIXED_K,
    LARGEST_GAP,
    cluster_subjects,
    load_summary,
    outcome_probabilities,
    relabel_and_summarize,
)
from .sampler import load_chain, run_chain, run_lca_chain, save_chain
from .simgen import SimConfig, default_truth_tables, generate, load_truth

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SAMPLER = 3
EXIT_SHAPE = 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_manifest(out_dir, command, config, seed, inputs, outputs, timings):
    manifest = {
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {p: _sha256(p) for p in inputs},
        "outputs": sorted(outputs),
        "timings": timings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _progress(label):
    def cb(t, value):
        print(f"{label} iter={t} joint={value:.3f}", file=sys.stderr, flush=True)

    return cb


def _threads(args):
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get("SRPC_THREADS", "1")))


# -- simulate -------------------------------------------------------------------


def _simulate_one(sim_cfg, rep, seed, out_dir):
    rng = np.random.default_rng(np.random.SeedSequence([seed, rep]))
    ds, truth = generate(sim_cfg, rng)
    rep_dir = os.path.join(out_dir, f"rep_{rep:02d}")
    os.makedirs(rep_dir, exist_ok=True)
    data_path = os.path.join(rep_dir, "data.csv")
    truth_path = os.path.join(rep_dir, "truth.json")
    save_dataset(ds, data_path)
    truth.save(truth_path)
    return [data_path, truth_path]


def cmd_simulate(args):
    t0 = time.perf_counter()
    sim_kwargs = {}
    inputs = []
    if args.config:
        _, _, sim_kwargs = load_config(args.config)
        inputs.append(args.config)
    sim_kwargs.pop("seed", None)
    sim_kwargs.pop("replicates", None)
    sim_cfg = SimConfig(seed=args.seed, replicates=args.replicates, **sim_kwargs)
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    threads = _threads(args)
    reps = range(args.replicates)
    if threads > 1 and args.replicates > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(_simulate_one, sim_cfg, r, args.seed, args.out) for r in reps
            ]
            for f in futures:
                outputs += f.result()
    else:
        for r in reps:
            outputs += _simulate_one(sim_cfg, r, args.seed, args.out)
            print(f"simulate replicate {r + 1}/{args.replicates}", file=sys.stderr)
    _write_manifest(
        args.out,
        "simulate",
        dataclasses.asdict(sim_cfg),
        args.seed,
        inputs,
        outputs,
        {"total_s": time.perf_counter() - t0},
    )
    return EXIT_OK


# -- fit ------------------------------------------------------------------------


def _parse_sweep(spec):
    lo, _, hi = spec.partition(":")
    lo, hi = int(lo), int(hi)
    if lo < 1 or hi < lo:
        raise ShapeMismatch(f"bad k-sweep range {spec!r}")
    return range(lo, hi + 1)


def _fit_single(ds, hyper, args, k, seed, runner, label):
    config = ChainConfig(
        n_iter=args.iters, burn_in=args.burn, thin=args.thin, seed=seed, fixed_K0=k
    )
    progress = _progress(label) if args.progress_every else None
    return runner(
        ds, hyper, config, coding=args.coding,
        progress=progress, progress_every=args.progress_every,
    )


def _write_fit_outputs(out_dir, ds, chain, k_star, assignment, outputs):
    summary = relabel_and_summarize(chain, assignment)
    chain_dir = os.path.join(out_dir, "chain")
    save_chain(chain, chain_dir)
    outputs += [
        os.path.join(chain_dir, "meta.json"),
        os.path.join(chain_dir, "loglik.csv"),
    ] + [os.path.join(chain_dir, "samples", f"{b}.csv") for b in chain.samples]
    summary_path = os.path.join(out_dir, "summary.json")
    summary.save(summary_path)
    modal_path = os.path.join(out_dir, "modal_patterns.csv")
    summary.save_modal_csv(modal_path)
    report = fit_report(chain, ds)
    report_path = os.path.join(out_dir, "fit_report.json")
    report.save(report_path)

    phi_hat = outcome_probabilities(summary, ds)
    pred_path = os.path.join(out_dir, "predictions.csv")
    with open(pred_path, "w") as fh:
        fh.write("id,subpop,y,cluster,phi_hat\n")
        for i in range(ds.n):
            fh.write(
                f"{i + 1},{ds.s[i]},{ds.y[i]},{assignment[i]},{phi_hat[i]:.17g}\n"
            )
    nu_path = os.path.join(out_dir, "nu_grid.csv")
    if "nu" in summary.medians:
        np.savetxt(nu_path, summary.medians["nu"], fmt="%.17g", delimiter=",")
        outputs.append(nu_path)
    outputs += [summary_path, modal_path, report_path, pred_path]
    return summary, report


def cmd_fit(args):
    t0 = time.perf_counter()
    ds = load_dataset(args.data)
    inputs = [args.data]
    hyper_kwargs = {}
    if args.config:
        hyper_kwargs, _, _ = load_config(args.config)
        inputs.append(args.config)
    kmax = args.kmax if args.kmax else default_cluster_cap(ds.n)
    hyper_kwargs.setdefault("K0", kmax)
    hyper_kwargs.setdefault("Ks", args.ks)
    hyper = Hyperparameters(**hyper_kwargs)
    runner = run_chain if args.model == "srpc" else run_lca_chain
    os.makedirs(args.out, exist_ok=True)
    outputs = []
    timings = {}

    if args.k_sweep:
        rows = []
        best = None
        for k in _parse_sweep(args.k_sweep):
            chain = _fit_single(ds, hyper, args, k, args.seed, runner, f"K={k}")
            report = fit_report(chain, ds)
            rows.append((k, report.dic6, report.dbar, report.dplugin))
            print(f"K={k} dic6={report.dic6:.2f}", file=sys.stderr)
            if best is None or report.dic6 < best[1]:
                best = (k, report.dic6, chain)
        sweep_path = os.path.join(args.out, "k_sweep.csv")
        with open(sweep_path, "w") as fh:
            fh.write("k,dic6,dbar,dplugin\n")
            for k, dic, dbar, dplug in rows:
                fh.write(f"{k},{dic:.17g},{dbar:.17g},{dplug:.17g}\n")
        outputs.append(sweep_path)
        k_star, _, chain = best
        _, _, _, assignment = cluster_subjects(
            chain.block("C"), rule=FIXED_K, k=k_star
        )
    elif args.two_stage:
        t1 = time.perf_counter()
        stage1 = _fit_single(ds, hyper, args, None, args.seed, runner, "stage1")
        timings["stage1_s"] = time.perf_counter() - t1
        sim, dend, k_star, _ = cluster_subjects(stage1.block("C"))
        print(f"stage 1 selected K* = {k_star}", file=sys.stderr)
        sim_path = os.path.join(args.out, "similarity_stage1.bin")
        sim.save(sim_path)
        outputs.append(sim_path)
        t1 = time.perf_counter()
        chain = _fit_single(ds, hyper, args, k_star, args.seed + 1, runner, "stage2")
        timings["stage2_s"] = time.perf_counter() - t1
        _, _, _, assignment = cluster_subjects(chain.block("C"), rule=FIXED_K, k=k_star)
    else:
        if not args.k:
            raise ShapeMismatch("fit needs one of --k, --k-sweep, --two-stage")
        k_star = args.k
        chain = _fit_single(ds, hyper, args, k_star, args.seed, runner, f"K={k_star}")
        _, _, _, assignment = cluster_subjects(chain.block("C"), rule=FIXED_K, k=k_star)

    sim, _, _, _ = cluster_subjects(chain.block("C"), rule=FIXED_K, k=k_star)
    sim_path = os.path.join(args.out, "similarity.bin")
    sim.save(sim_path)
    outputs.append(sim_path)
    summary, report = _write_fit_outputs(args.out, ds, chain, k_star, assignment, outputs)
    if args.svg:
        svg_path = os.path.join(args.out, "modal_patterns.svg")
        _modal_svg(summary, svg_path)
        outputs.append(svg_path)
    timings["total_s"] = time.perf_counter() - t0
    snapshot = {
        "model": args.model,
        "k": args.k,
        "k_sweep": args.k_sweep,
        "two_stage": args.two_stage,
        "iters": args.iters,
        "burn": args.burn,
        "thin": args.thin,
        "coding": args.coding,
        "kmax": kmax,
        "ks": args.ks,
        "hyperparameters": dataclasses.asdict(hyper),
        "k_star": int(k_star),
    }
    _write_manifest(args.out, "fit", snapshot, args.seed, inputs, outputs, timings)
    print(f"dic6={report.dic6:.2f} k_star={k_star}", file=sys.stderr)
    return EXIT_OK


def _modal_svg(summary, path):
    """Self-contained level-grid rendering of the modal patterns."""
    K, p = summary.modal_levels.shape
    cell, pad = 14, 30
    width, height = pad + p * cell, pad + K * cell
    palette = ["#2166ac", "#67a9cf", "#fddbc7", "#ef8a62", "#b2182b", "#762a83"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
    ]
    for a in range(K):
        for j in range(p):
            lv = int(summary.modal_levels[a, j])
            color = palette[(lv - 1) % len(palette)]
            op = 0.35 + 0.65 * float(summary.modal_probs[a, j])
            parts.append(
                f'<rect x="{pad + j * cell}" y="{pad + a * cell}" width="{cell - 1}" '
                f'height="{cell - 1}" fill="{color}" fill-opacity="{op:.3f}"/>'
            )
        parts.append(
            f'<text x="2" y="{pad + a * cell + cell - 4}" font-size="9">c{a + 1}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


# -- summarize --------------------------------------------------------------------


def cmd_summarize(args):
    t0 = time.perf_counter()
    chain = load_chain(args.chain)
    k = args.k
    if k is None:
        k = int(chain.block("C").max())
        rule, kw = LARGEST_GAP, {}
    else:
        rule, kw = FIXED_K, {"k": k}
    sim, dend, k_star, assignment = cluster_subjects(chain.block("C"), rule=rule, **kw)
    summary = relabel_and_summarize(chain, assignment)
    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "summary.json")
    summary.save(summary_path)
    modal_path = os.path.join(args.out, "modal_patterns.csv")
    summary.save_modal_csv(modal_path)
    sim_path = os.path.join(args.out, "similarity.bin")
    sim.save(sim_path)
    outputs = [summary_path, modal_path, sim_path]
    inputs = [os.path.join(args.chain, "meta.json")]
    _write_manifest(
        args.out,
        "summarize",
        {"chain": args.chain, "k": args.k, "k_star": k_star},
        args.seed,
        inputs,
        outputs,
        {"total_s": time.perf_counter() - t0},
    )
    return EXIT_OK


# -- compare ----------------------------------------------------------------------


def cmd_compare(args):
    t0 = time.perf_counter()
    truth = load_truth(args.truth)
    rows = []
    inputs = [args.truth]
    for fit_dir in args.fit:
        summary = load_summary(os.path.join(fit_dir, "summary.json"))
        with open(os.path.join(fit_dir, "fit_report.json")) as fh:
            report = json.load(fh)
        pred = np.loadtxt(
            os.path.join(fit_dir, "predictions.csv"), delimiter=",", skiprows=1, ndmin=2
        )
        phi_hat = pred[:, 4]
        assignment = pred[:, 3].astype(np.int64)
        nu_hat = summary.medians.get("nu")
        mse_o, mse_nu, sens = metrics_mse_sensitivity(truth, phi_hat, nu_hat, assignment)
        rows.append(
            {
                "fit": fit_dir,
                "model": report["model"],
                "k_star": summary.k_star,
                "mse_outcome": mse_o,
                "mse_nu": mse_nu,
                "sensitivity": sens,
                "dic6": report["dic6"],
            }
        )
        inputs += [
            os.path.join(fit_dir, "summary.json"),
            os.path.join(fit_dir, "fit_report.json"),
            os.path.join(fit_dir, "predictions.csv"),
        ]
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "metrics.csv")
    cols = ["fit", "model", "k_star", "mse_outcome", "mse_nu", "sensitivity", "dic6"]
    with open(csv_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(str(r[c]) for c in cols) + "\n")
    widths = {c: max(len(c), max((len(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]))) for r in rows)) for c in cols}
    header = "  ".join(c.ljust(widths[c]) for c in cols)
    print(header)
    for r in rows:
        print(
            "  ".join(
                (f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c])).ljust(widths[c])
                for c in cols
            )
        )
    _write_manifest(
        args.out,
        "compare",
        {"truth": args.truth, "fits": list(args.fit)},
        args.seed,
        inputs,
        [csv_path],
        {"total_s": time.perf_counter() - t0},
    )
    return EXIT_OK


# -- ppc --------------------------------------------------------------------------


def cmd_ppc(args):
    t0 = time.perf_counter()
    ds = load_dataset(args.data)
    hyper = Hyperparameters(K0=args.k, Ks=args.ks)
    config = ChainConfig(n_iter=args.iters, burn_in=args.burn, seed=args.seed)
    progress = None
    if args.progress_every:
        def progress(t, diff):
            print(f"ppc permutation {t}/{args.r} diff={diff:.4f}", file=sys.stderr)
    report = ppc_deviance(
        ds, args.model, hyper, config, r=args.r, train_frac=args.train_frac,
        seed=args.seed, coding=args.coding, progress=progress,
    )
    os.makedirs(args.out, exist_ok=True)
    report_path = os.path.join(args.out, "ppc_report.json")
    report.save(report_path)
    diff_path = os.path.join(args.out, "ppc_differences.csv")
    with open(diff_path, "w") as fh:
        fh.write("permutation,difference\n")
        for i, v in enumerate(report.differences):
            fh.write(f"{i + 1},{v:.17g}\n")
    _write_manifest(
        args.out,
        "ppc",
        {
            "model": args.model, "r": args.r, "train_frac": args.train_frac,
            "iters": args.iters, "burn": args.burn, "k": args.k, "ks": args.ks,
        },
        args.seed,
        [args.data],
        [report_path, diff_path],
        {"total_s": time.perf_counter() - t0},
    )
    print(f"mean={report.mean:.4f} sd={report.sd:.4f}", file=sys.stderr)
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None,
                    help="worker count; SRPC_THREADS is the fallback")
    sp.add_argument("--out", required=True)
    sp.add_argument("--progress-every", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="srpc")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate synthetic datasets with truth")
    p.add_argument("--config", help="TOML file with a [simulation] section")
    p.add_argument("--replicates", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sampler and post-process")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("srpc", "slca"), default="srpc")
    p.add_argument("--k", type=int, help="fixed number of global clusters")
    p.add_argument("--k-sweep", help="A:B inclusive range; selects by DIC6")
    p.add_argument("--two-stage", action="store_true",
                   help="overfitted first run, dendrogram K*, refit at K*")
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--burn", type=int, default=5_000)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--coding", choices=(CELL_MEANS, REFERENCE_CELL), default=CELL_MEANS)
    p.add_argument("--kmax", type=int, help="stage-1 overfitted cluster cap")
    p.add_argument("--ks", type=int, default=5, help="local cluster cap")
    p.add_argument("--config", help="TOML file with a [hyperparameters] section")
    p.add_argument("--svg", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="recompute the summary from a chain dir")
    p.add_argument("--chain", required=True)
    p.add_argument("--k", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("compare", help="metrics table for fits against truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--fit", action="append", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ppc", help="train/test deviance dispersion check")
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=("srpc", "slca"), default="srpc")
    p.add_argument("--r", type=int, default=100)
    p.add_argument("--train-frac", type=float, default=0.9)
    p.add_argument("--iters", type=int, default=2_000)
    p.add_argument("--burn", type=int, default=500)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--ks", type=int, default=5)
    p.add_argument("--coding", choices=(CELL_MEANS, REFERENCE_CELL), default=CELL_MEANS)
    _add_common(p)
    p.set_defaults(func=cmd_ppc)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SamplerError as exc:
        print(f"error: sampler failed: {exc}", file=sys.stderr)
        return EXIT_SAMPLER
    except ShapeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except (SrpcError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
