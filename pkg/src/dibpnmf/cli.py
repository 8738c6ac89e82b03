"""Command-line front end.

Exit status: 0 success, 1 data error, 2 usage error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataio import (
    atomic_write_text,
    load_dense_csv,
    read_triplets,
    sampler_snapshot,
    save_snapshot,
    synth_binary,
    synth_planted,
    write_matrix_csv,
)
from .dibp import effective_k
from .errors import ContractError, DomainError, NumericalError, ParseError, SamplerAbort, SnapshotError
from .evaluation import cluster_metrics, cv_split, kmeans_assign, mae, pair_counts
from .factorization import DataMatrix, GibbsSampler, ModelConfig, flexibility_metric, recon_error_l1, reconstruct
from .factorization.snmf import snmf_fit

EXIT_DATA = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3

MODEL_FLAGS = {
    "bb": ("a0", "b0"),
    "copula": ("rho0", "alpha1", "alpha2"),
    "gp": ("sigma", "eta", "hs"),
    "snmf": ("k", "lam"),
}
SAMPLER_FLAGS = ("k_trunc", "burn_in", "thin", "epsilon", "tau1", "tau2")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(r[h]) for h in header) for r in rows)
    return "\n".join(lines) + "\n"


def derive_seeds(master, n):
    """Independent child seeds for folds/trials, fixed by the master seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(master).spawn(n)]


# ---------------------------------------------------------------------------
# Argument parsing


def _add_model_flags(p, with_snmf=True):
    g = p.add_argument_group("sampler")
    g.add_argument("--k-trunc", type=int, default=None, help="truncation level K (default 30)")
    g.add_argument("--iters", type=int, default=1000)
    g.add_argument("--burn-in", type=int, default=None)
    g.add_argument("--thin", type=int, default=None)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=None)
    g.add_argument("--tau1", type=float, default=None)
    g.add_argument("--tau2", type=float, default=None)
    g.add_argument("--a0", type=float, default=None, help="bb: initial a")
    g.add_argument("--b0", type=float, default=None, help="bb: initial b")
    g.add_argument("--rho0", type=float, default=None, help="copula: initial rho")
    g.add_argument("--alpha1", type=float, default=None, help="copula: initial alpha1")
    g.add_argument("--alpha2", type=float, default=None, help="copula: initial alpha2")
    g.add_argument("--sigma", type=float, default=None, help="gp: kernel amplitude")
    g.add_argument("--eta", type=float, default=None, help="gp: noise scale")
    g.add_argument("--hs", type=float, default=None, help="gp: gamma shape of the length-scale prior")
    if with_snmf:
        g.add_argument("--k", type=int, default=None, help="snmf: factor count")
        g.add_argument("--lambda", dest="lam", type=float, default=None, help="snmf: L1 weight (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="dibpnmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="factorize a dense matrix")
    p.add_argument("--model", choices=("bb", "copula", "gp", "snmf"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--header", action="store_true", help="input CSV has a header line")
    p.add_argument("--mask", default=None, help="0/1 CSV, 1 = use entry for fitting")
    p.add_argument("--out", default="run")
    p.add_argument("--record-time", action="store_true", help="add wall-clock times to the manifest")
    _add_model_flags(p)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("kind", choices=("binary", "planted"))
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=30)
    p.add_argument("--density", type=float, default=0.5, help="binary: one-probability")
    p.add_argument("--k-true", type=int, default=5, help="planted: factor count")
    p.add_argument("--sparsity", type=float, default=0.5, help="planted: factor inclusion probability")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    p = sub.add_parser("eval-clustering", help="cluster factor rows and score against labels")
    p.add_argument("--factors", required=True)
    p.add_argument("--labels", required=True, help="one label per line")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--out", default=None, help="also write the metrics CSV here")

    p = sub.add_parser("eval-recsys", help="cross-validated MAE on held-out ratings")
    p.add_argument("--input", required=True, help="1-based 'row col value' triplets")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--model", choices=("bb", "copula", "gp", "snmf"), default="bb")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--reconstruction", default=None, help="score this dense CSV instead of fitting")
    p.add_argument("--out", default="recsys")
    _add_model_flags(p)

    p = sub.add_parser("compare", help="fit all three coupled models on random binary matrices")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=30)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--iters", type=int, default=1000)
    p.add_argument("--k-trunc", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="compare")
    return parser


def _check_model_flags(parser, args):
    for model, names in MODEL_FLAGS.items():
        if model == args.model:
            continue
        for name in names:
            if getattr(args, name, None) is not None:
                flag = "--lambda" if name == "lam" else "--" + name.replace("_", "-")
                parser.error(f"{flag} does not apply to --model {args.model}")
    if args.model == "snmf":
        for name in SAMPLER_FLAGS:
            if getattr(args, name, None) is not None:
                parser.error(f"--{name.replace('_', '-')} does not apply to --model snmf")
    if args.iters < 1:
        parser.error("--iters must be >= 1")


def _config_from_args(args, seed=None):
    kw = {"model": args.model, "max_iter": args.iters, "seed": args.seed if seed is None else seed}
    mapping = {"k_trunc": "K", "burn_in": "burn_in", "thin": "thin", "epsilon": "epsilon", "tau1": "tau1",
               "tau2": "tau2", "a0": "a0", "b0": "b0", "rho0": "rho0", "alpha1": "alpha1", "alpha2": "alpha2",
               "sigma": "sigma", "eta": "eta", "hs": "hs"}
    for arg, field_name in mapping.items():
        val = getattr(args, arg, None)
        if val is not None:
            kw[field_name] = val
    return ModelConfig(**kw)


def _snmf_settings(args):
    return {"k": args.k if args.k is not None else 10, "lambda": args.lam if args.lam is not None else 1.0,
            "iters": args.iters, "seed": args.seed}


# ---------------------------------------------------------------------------
# Commands


def _write_manifest(out, args, command, config, inputs, record_time, extra=None):
    manifest = {
        "format": "dibpnmf-manifest",
        "version": 1,
        "package_version": __version__,
        "command": command,
        "argv": list(args._argv),
        "inputs": inputs,
        "seed": args.seed,
        "output_dir": str(args.out),
        "config": config,
    }
    if extra:
        manifest.update(extra)
    if record_time:
        manifest["started_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    atomic_write_text(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def _load_input(args):
    data = load_dense_csv(args.input, header=args.header)
    if args.mask is not None:
        mask = load_dense_csv(args.mask).values
        data = DataMatrix(data.values, mask)
    return data


def _fit_once(data, args, seed):
    """Fit one model; returns a dict with reconstruction, factors and (for samplers) sampler/trace."""
    if args.model == "snmf":
        s = _snmf_settings(args)
        A, X, obj = snmf_fit(data, s["k"], s["lambda"], s["iters"], seed)
        return {"A": A, "X": X, "recon": A @ X.T, "objective": obj}
    cfg = _config_from_args(args, seed)
    sampler = GibbsSampler(data, cfg)
    best, trace = sampler.run()
    return {"A": best.A, "X": best.X, "recon": reconstruct(best), "sampler": sampler, "trace": trace,
            "best": best, "config": cfg}


def trace_csv(trace):
    rows = list(trace.rows())
    header = ["iteration", "burn_in", "loglik", "effective_k"]
    header += [f"accept_{k}" for k in trace.accept] + list(trace.theta)
    return _csv_text(header, rows)


def cmd_fit(args, parser):
    _check_model_flags(parser, args)
    data = _load_input(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.model == "snmf":
        config = _snmf_settings(args)
    else:
        config = _config_from_args(args).to_dict()
    inputs = {"input": args.input, "mask": args.mask, "header": args.header}
    manifest = _write_manifest(out, args, "fit", config, inputs, args.record_time)

    res = _fit_once(data, args, args.seed)
    if args.model == "snmf":
        rows = [{"iteration": i, "objective": v} for i, v in enumerate(res["objective"])]
        atomic_write_text(out / "trace.csv", _csv_text(["iteration", "objective"], rows))
    else:
        atomic_write_text(out / "trace.csv", trace_csv(res["trace"]))
        save_snapshot(sampler_snapshot(res["sampler"], best=True), out / "best_state.json")
    write_matrix_csv(out / "reconstruction.csv", res["recon"])
    write_matrix_csv(out / "A.csv", res["A"])
    write_matrix_csv(out / "X.csv", res["X"])
    if args.record_time:
        manifest["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        atomic_write_text(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    err = recon_error_l1(data.values, res["recon"], data.mask)
    print(f"{args.model}: L1 reconstruction error {err:.4f}; outputs in {out}")
    return 0


def cmd_synth(args, parser):
    if args.rows < 1 or args.cols < 1:
        parser.error("--rows and --cols must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "binary":
        if not 0.0 < args.density <= 1.0:
            parser.error("--density must lie in (0, 1]")
        write_matrix_csv(out / "Y.csv", synth_binary(args.rows, args.cols, args.density, args.seed).values)
        print(f"wrote {out / 'Y.csv'}")
    else:
        if args.k_true < 1 or not 0.0 < args.sparsity <= 1.0:
            parser.error("--k-true must be >= 1 and --sparsity in (0, 1]")
        data, A, X = synth_planted(args.rows, args.cols, args.k_true, args.sparsity, args.seed)
        write_matrix_csv(out / "Y.csv", data.values)
        write_matrix_csv(out / "A.csv", A)
        write_matrix_csv(out / "X.csv", X)
        print(f"wrote Y.csv, A.csv, X.csv to {out}")
    return 0


def _read_labels(path):
    with open(path, encoding="utf-8") as fh:
        labels = [line.strip() for line in fh if line.strip()]
    if not labels:
        raise ParseError("no labels", path)
    return np.array(labels)


def cmd_eval_clustering(args, parser):
    if args.clusters < 1 or args.restarts < 1:
        parser.error("--clusters and --restarts must be positive")
    factors = load_dense_csv(args.factors).values
    truth = _read_labels(args.labels)
    if len(truth) != factors.shape[0]:
        raise ContractError(f"{len(truth)} labels for {factors.shape[0]} factor rows")
    pred = kmeans_assign(factors, args.clusters, args.seed, args.restarts)
    pc = pair_counts(pred, truth)
    m = cluster_metrics(pc)
    row = {"jc": m.jc, "fm": m.fm, "f1": m.f1, "a": pc.a, "b": pc.b, "c": pc.c}
    text = _csv_text(["jc", "fm", "f1", "a", "b", "c"], [{k: ("" if v is None else v) for k, v in row.items()}])
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)

    def show(v):
        return "degenerate" if v is None else f"{v:.4f}"

    print(f"JC={show(m.jc)} FM={show(m.fm)} F1={show(m.f1)} (pairs a={pc.a} b={pc.b} c={pc.c})", file=sys.stderr)
    return 0


def cmd_eval_recsys(args, parser):
    _check_model_flags(parser, args)
    if args.folds < 2:
        parser.error("--folds must be >= 2")
    ratings = read_triplets(args.input, args.rows, args.cols)
    data = ratings.to_data()
    fixed = load_dense_csv(args.reconstruction).values if args.reconstruction else None
    if fixed is not None and fixed.shape != data.shape:
        raise ContractError(f"reconstruction is {fixed.shape}, ratings grid is {data.shape}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _snmf_settings(args) if args.model == "snmf" else _config_from_args(args).to_dict()
    _write_manifest(out, args, "eval-recsys", config,
                    {"input": args.input, "rows": args.rows, "cols": args.cols, "reconstruction": args.reconstruction},
                    False, {"folds": args.folds})
    splits = cv_split(ratings, args.folds, args.seed)
    seeds = derive_seeds(args.seed, args.folds)
    rows = []
    for f, ((train, test), seed) in enumerate(zip(splits, seeds)):
        if fixed is not None:
            recon = fixed
        else:
            recon = _fit_once(data.with_mask(train), args, seed)["recon"]
        rows.append({"fold": f, "seed": seed, "n_train": int(train.sum()), "n_test": int(test.sum()),
                     "mae": mae(recon, data.values, test)})
    vals = np.array([r["mae"] for r in rows])
    atomic_write_text(out / "folds.csv", _csv_text(["fold", "seed", "n_train", "n_test", "mae"], rows))
    summary = {"model": args.model if fixed is None else "given", "folds": args.folds,
               "mae_mean": float(vals.mean()), "mae_std": float(vals.std(ddof=1))}
    atomic_write_text(out / "summary.csv", _csv_text(list(summary), [summary]))
    print(f"MAE {summary['mae_mean']:.4f} +/- {summary['mae_std']:.4f} over {args.folds} folds")
    return 0


def cmd_compare(args, parser):
    if args.trials < 1 or args.rows < 1 or args.cols < 1 or args.iters < 1 or args.k_trunc < 1:
        parser.error("--trials, --rows, --cols, --iters and --k-trunc must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {"rows": args.rows, "cols": args.cols, "density": args.density, "iters": args.iters,
              "K": args.k_trunc}
    _write_manifest(out, args, "compare", config, {}, False, {"trials": args.trials})
    rows = []
    for t, seed in enumerate(derive_seeds(args.seed, args.trials)):
        data = synth_binary(args.rows, args.cols, args.density, seed)
        for model in ("bb", "copula", "gp"):
            cfg = ModelConfig(model=model, K=args.k_trunc, max_iter=args.iters, seed=seed, keep_samples=False)
            best, trace = GibbsSampler(data, cfg).run()
            rows.append({
                "trial": t, "seed": seed, "model": model,
                "recon_error": recon_error_l1(data.values, reconstruct(best)),
                "effective_k": effective_k(best.Z1, best.Z2),
                "flexibility": flexibility_metric(best.Z1, best.Z2),
                "best_loglik": trace.best_loglik,
            })
    header = ["trial", "seed", "model", "recon_error", "effective_k", "flexibility", "best_loglik"]
    atomic_write_text(out / "compare.csv", _csv_text(header, rows))
    print(f"wrote {len(rows)} rows to {out / 'compare.csv'}")
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "synth": cmd_synth,
    "eval-clustering": cmd_eval_clustering,
    "eval-recsys": cmd_eval_recsys,
    "compare": cmd_compare,
}


def main(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return COMMANDS[args.command](args, parser)
    except (SamplerAbort, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, DomainError, ContractError, SnapshotError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
