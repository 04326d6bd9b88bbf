"""Batch command-line front end.

``dpditto <command> --config exp.toml [--seed S] [--out DIR] [--workers N]``

Commands: ``train``, ``bounds``, ``fairness``, ``optimize``, ``tune``,
``oracle``, ``gradcheck``.  Every command writes CSV series plus
``summary.json`` and ``manifest.json`` into the output directory.  Exit
codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, blr, bounds, data, dp, fairness, fedsim, lambdaopt, models
from .config import ExperimentConfig, load_config
from .core import (STREAM_DATA, STREAM_INIT, STREAM_ORACLE, STREAM_SYNTH, ClientDataset,
                   partition_dataset, seeded_rng)
from .errors import (ConfigError, ConsistencyError, DegenerateProblemError, IDXFormatError,
                     InfeasibleDesignError, InternalConsistencyError, InvalidPartitionError,
                     NumericalError)

COMMANDS = ("train", "bounds", "fairness", "optimize", "tune", "oracle", "gradcheck")
INPUT_ERRORS = (ConfigError, IDXFormatError, ConsistencyError, InfeasibleDesignError, InvalidPartitionError)
NUMERIC_ERRORS = (NumericalError, InternalConsistencyError, DegenerateProblemError, FloatingPointError)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_plot_series(rows, columns, path) -> Path:
    """Write ``rows`` (dicts) as a UTF-8 CSV with a fixed column order.

    Floats use ``repr`` so values round-trip exactly; an empty ``rows``
    yields a header-only file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- data setup

@dataclasses.dataclass
class Workload:
    model: models.LossModel
    datasets: list[ClientDataset]
    eval_datasets: list[ClientDataset] | None
    instance: blr.BlrInstance | None = None


def _balanced_subset(full: ClientDataset, n_samples: int, rng) -> ClientDataset:
    labels = np.asarray(full.targets)
    classes = np.unique(labels)
    per = n_samples // len(classes)
    picks = [rng.permutation(np.flatnonzero(labels == c))[:per] for c in classes]
    return full.subset(np.sort(np.concatenate(picks)))


def build_workload(cfg: ExperimentConfig, seed: int | None = None) -> Workload:
    seed = cfg.seed if seed is None else seed
    d = cfg.data
    n = cfg.training.n_clients
    if d["source"] == "synthetic-blr":
        params = blr.BlrParams(n=n, b=d["b"], d=d["d"], rho=float(d["rho"]),
                               zeta2=float(d["zeta2"]), sigma2=float(d["sigma2"]))
        inst = blr.generate_instance(params, rng=seeded_rng(seed, STREAM_SYNTH))
        return Workload(models.QuadraticModel(params.d), inst.datasets(), None, inst)

    if d["source"] == "synthetic-classification":
        full = data.synthetic_classification(d["n_samples"], d["n_features"], d["n_classes"],
                                             seeded_rng(seed, STREAM_SYNTH), float(d["separation"]))
        test = None
        if d["test_fraction"] > 0:
            cut = int(round(full.size * (1 - d["test_fraction"])))
            test = full.subset(np.arange(cut, full.size))
            full = full.subset(np.arange(cut))
        n_classes = d["n_classes"]
    else:
        full = data.read_idx(d["images"], d["labels"])
        test = None
        if d["test_images"] and d["test_labels"]:
            test = data.read_idx(d["test_images"], d["test_labels"])
        if d["n_samples"]:
            full = _balanced_subset(full, d["n_samples"], seeded_rng(seed, (STREAM_DATA, 1)))
        n_classes = int(np.max(full.targets)) + 1

    part = partition_dataset(full, n, d["partition"], rng=seeded_rng(seed, STREAM_DATA), k=d["shards"])
    evals = None
    if test is not None:
        evals = list(partition_dataset(test, n, "iid", rng=seeded_rng(seed, (STREAM_DATA, 2))))
    model = models.make_model(cfg.model, full.dim, n_classes, cfg.hidden)
    return Workload(model, list(part), evals)


def _assumptions(cfg: ExperimentConfig, wl: Workload):
    if cfg.assumptions is not None:
        return cfg.assumptions
    if wl.instance is not None:
        return blr.assumption_params(wl.instance)
    raise ConfigError("bound analysis needs an [assumptions] section for this data source")


def _need_blr(wl: Workload, what: str) -> blr.BlrInstance:
    if wl.instance is None:
        raise ConfigError(f"{what} needs data.source = \"synthetic-blr\"")
    return wl.instance


def _fairness_params(cfg: ExperimentConfig, inst: blr.BlrInstance, t: int) -> fairness.FairnessParams:
    cal = dp.calibrate(dp.sensitivity(cfg.privacy.clip_c, inst.params.b), t,
                       cfg.training.n_clients, cfg.privacy.epsilon, cfg.privacy.delta)
    return fairness.fairness_params_from_instance(inst, cal.sigma_z2)


# ---------------------------------------------------------------- analyses

def analyse_bounds(cfg, wl, out: Path) -> dict:
    bp = bounds.derive_constants(_assumptions(cfg, wl), cfg.training, cfg.privacy, wl.model.dim,
                                 wl.datasets[0].size, heuristic_model=wl.model.kind == "mlp")
    t_max = cfg.analysis["t_max"]
    ts = np.arange(t_max + 1)
    hv = bounds.h(bp, ts)
    gb = bounds.global_bound(bp, ts)
    summary = {"eps_l": bp.eps_l, "eps_g": bp.eps_g, "beta": bp.beta, "phi_l": bp.phi_l,
               "heuristic": bp.heuristic, "warnings": list(bp.warnings), "branch": bp.branch}
    try:
        lb = bounds.lower_bound(bp)
        hl = lb(ts)
        res = bounds.search_T(bp, t_max=t_max)
        summary.update(h0=lb.h0, slope=lb.slope, t_star=res.t_star, h_star=res.h_star,
                       t_prime=res.t_prime, unbounded=res.unbounded)
    except InternalConsistencyError as exc:
        hl = np.full(ts.shape, math.nan)
        k = int(np.argmin(hv))
        summary.update(t_star=int(ts[k]), h_star=float(hv[k]), lower_bound_error=str(exc))
    rows = [{"T": int(t), "h": float(a), "h_low": float(b), "global_bound": float(c)}
            for t, a, b, c in zip(ts, hv, hl, gb)]
    emit_plot_series(rows, ["T", "h", "h_low", "global_bound"], out / "bounds.csv")
    return summary


def analyse_fairness(cfg, wl, out: Path) -> dict:
    inst = _need_blr(wl, "fairness analysis")
    t_grid = cfg.analysis["t_grid"] or [cfg.training.rounds]
    rows, best = [], {}
    for t in t_grid:
        fp = _fairness_params(cfg, inst, t)
        for lam in cfg.analysis["lambda_grid"]:
            rows.append({"T": t, "lambda": float(lam), "R": fairness.fairness_R(lam, fp),
                         "R_exact": fairness.fairness_R_exact(lam, fp)})
        try:
            best[str(t)] = lambdaopt.optimal_lambda(fp)
        except (DegenerateProblemError, InternalConsistencyError) as exc:
            best[str(t)] = str(exc)
    emit_plot_series(rows, ["T", "lambda", "R", "R_exact"], out / "fairness_vs_lambda.csv")
    fp0 = _fairness_params(cfg, inst, cfg.training.rounds)
    return {"lambda_star_by_T": best, "s1": fp0.s1, "g1": fp0.g1, "g2": fp0.g2,
            "sigma_w2": fp0.sigma_w2, "sigma_z2": fp0.sigma_z2,
            "uniqueness_condition": lambdaopt.uniqueness_condition(cfg.privacy.clip_c, fp0.d, fp0.n, fp0.s1)}


def analyse_optimize(cfg, wl, out: Path) -> dict:
    inst = _need_blr(wl, "joint optimization")
    bp = bounds.derive_constants(_assumptions(cfg, wl), cfg.training, cfg.privacy, wl.model.dim,
                                 wl.datasets[0].size)
    fp = _fairness_params(cfg, inst, cfg.training.rounds)
    res = lambdaopt.joint_search(bp, fp, cfg.analysis["t_max"])
    emit_plot_series(res.trace, ["T", "lambda", "h", "R", "sigma_z2"], out / "joint_trace.csv")
    return {"t_star": res.t_star, "lambda_star": res.lambda_star, "h_star": res.h_star,
            "r_star": res.r_star, "cubic_solves": res.cubic_solves}


def analyse_oracle(cfg, wl, out: Path) -> dict:
    inst = _need_blr(wl, "the Monte-Carlo oracle")
    fp = _fairness_params(cfg, inst, cfg.training.rounds)
    rows = []
    for i, lam in enumerate(cfg.analysis["lambda_grid"]):
        rng = seeded_rng(cfg.seed, (STREAM_ORACLE, i))
        mean, se = fairness.mc_oracle(lam, fp, inst.u_hat, cfg.analysis["oracle_trials"], rng,
                                      mode=cfg.analysis["oracle_mode"])
        r, rx = fairness.fairness_R(lam, fp), fairness.fairness_R_exact(lam, fp)
        rows.append({"lambda": float(lam), "mc_mean": mean, "mc_stderr": se, "R": r, "R_exact": rx,
                     "z_R": (r - mean) / se if se > 0 else math.nan,
                     "z_R_exact": (rx - mean) / se if se > 0 else math.nan})
    cols = ["lambda", "mc_mean", "mc_stderr", "R", "R_exact", "z_R", "z_R_exact"]
    emit_plot_series(rows, cols, out / "oracle.csv")
    return {"mode": cfg.analysis["oracle_mode"], "trials": cfg.analysis["oracle_trials"],
            "cells": len(rows)}


def _final_loss(cfg, wl, t, lam):
    tc = dataclasses.replace(cfg.training, rounds=int(t), lam=float(lam))
    run = fedsim.run_training(tc, cfg.privacy, wl.model, wl.datasets, eval_datasets=wl.eval_datasets)
    return run[-1].mean_loss


def analyse_tune(cfg, wl, out: Path) -> dict:
    t_grid = cfg.analysis["t_grid"] or [t for t in (1, 2, 5, 10, 20, 50, 100) if t <= cfg.analysis["t_max"]]
    res = lambdaopt.empirical_alternating_search(lambda t, lam: _final_loss(cfg, wl, t, lam),
                                                 t_grid, cfg.analysis["lambda_grid"])
    emit_plot_series(res.trace, ["T", "lambda", "objective"], out / "tune_trace.csv")
    return {"t_star": res.t_star, "lambda_star": res.lambda_star, "objective": res.objective,
            "sweeps": res.sweeps, "evaluations": len(res.trace)}


def analyse_gradcheck(cfg, wl, out: Path) -> dict:
    tol = 1e-4 if wl.model.kind == "mlp" else 1e-5
    rows = []
    for i in range(cfg.analysis["gradcheck_instances"]):
        rng = seeded_rng(cfg.seed, (STREAM_INIT, 1000 + i))
        w = wl.model.init_params(rng) + rng.normal(0, 0.1, wl.model.dim)
        data_i = wl.datasets[i % len(wl.datasets)]
        err = models.finite_diff_check(wl.model, w, data_i)
        rows.append({"instance": i, "client": i % len(wl.datasets), "max_rel_error": err})
    emit_plot_series(rows, ["instance", "client", "max_rel_error"], out / "gradcheck.csv")
    worst = max((r["max_rel_error"] for r in rows), default=0.0)
    return {"model": wl.model.kind, "tolerance": tol, "max_rel_error": worst, "passed": worst < tol}


# ---------------------------------------------------------------- training

ROUND_COLUMNS = ["round", "client", "loss", "accuracy", "fairness"]


def round_rows(run: fedsim.TrainingRun):
    """Per-client rows then one ``client = "all"`` aggregate row per round."""
    rows = []
    for log in run:
        for i, (l, a) in enumerate(zip(log.losses, log.accuracies)):
            rows.append({"round": log.round, "client": i, "loss": float(l), "accuracy": float(a),
                         "fairness": log.empirical_fairness})
        rows.append({"round": log.round, "client": "all", "loss": log.mean_loss,
                     "accuracy": log.mean_accuracy, "fairness": log.empirical_fairness})
    return rows


def _sweep_job(args):
    cfg, seed, eps, lam, rounds = args
    wl = build_workload(cfg, seed)
    tc = dataclasses.replace(cfg.training, seed=seed, lam=lam, rounds=rounds)
    pv = dataclasses.replace(cfg.privacy, epsilon=eps)
    run = fedsim.run_training(tc, pv, wl.model, wl.datasets, eval_datasets=wl.eval_datasets)
    return [(log.round, log.mean_loss, log.mean_accuracy, log.empirical_fairness) for log in run]


def run_sweep(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    sw = cfg.sweep
    seeds = sw["seeds"] or [cfg.seed]
    epsilons = sw["epsilons"] or [cfg.privacy.epsilon]
    lambdas = sw["lambdas"] or [cfg.training.lam]
    rounds_list = sw["rounds"] or [cfg.training.rounds]
    jobs = [(cfg, s, e, float(l), r) for e in epsilons for l in lambdas for r in rounds_list for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]

    # deterministic merge: group by (eps, lam, T) in job order and average over seeds
    groups: dict[tuple, list] = {}
    for (_, s, e, l, r), res in zip(jobs, results):
        groups.setdefault((e, l, r), []).append(res)
    curves, finals = [], []
    for (e, l, r), runs in groups.items():
        arr = np.array(runs, dtype=np.float64)  # seeds x rounds x 4
        mean = arr.mean(axis=0)
        for row in mean:
            curves.append({"epsilon": e, "lambda": l, "T": r, "t": int(row[0]), "loss": row[1],
                           "accuracy": row[2], "fairness": row[3]})
        if len(mean):
            finals.append({"epsilon": e, "lambda": l, "T": r, "loss": mean[-1, 1],
                           "accuracy": mean[-1, 2], "fairness": mean[-1, 3], "seeds": len(runs)})
    emit_plot_series(curves, ["epsilon", "lambda", "T", "t", "loss", "accuracy", "fairness"],
                     out / "metric_vs_t_by_lambda.csv")
    emit_plot_series(finals, ["epsilon", "lambda", "T", "loss", "accuracy", "fairness", "seeds"],
                     out / "metric_vs_T_by_eps.csv")
    return {"jobs": len(jobs), "groups": len(groups)}


def command_train(cfg, wl, out: Path, workers: int) -> dict:
    run = fedsim.run_training(cfg.training, cfg.privacy, wl.model, wl.datasets,
                              eval_datasets=wl.eval_datasets)
    emit_plot_series(round_rows(run), ROUND_COLUMNS, out / "rounds.csv")
    summary = {"rounds": len(run), "heuristic": run.heuristic}
    if len(run):
        last = run[-1]
        summary.update(final_mean_loss=last.mean_loss, final_mean_accuracy=last.mean_accuracy,
                       final_fairness=last.empirical_fairness, final_global_loss=last.global_loss)
    if run.calibration is not None:
        summary["noise"] = dataclasses.asdict(run.calibration)
    ana = cfg.analysis
    if ana["bounds"]:
        summary["bounds"] = analyse_bounds(cfg, wl, out)
    if ana["fairness"]:
        summary["fairness"] = analyse_fairness(cfg, wl, out)
    if ana["optimize"]:
        summary["optimize"] = analyse_optimize(cfg, wl, out)
    if ana["oracle"]:
        summary["oracle"] = analyse_oracle(cfg, wl, out)
    if any(v is not None for v in cfg.sweep.values()):
        summary["sweep"] = run_sweep(cfg, out, workers)
    return summary


ANALYSES = {
    "bounds": analyse_bounds,
    "fairness": analyse_fairness,
    "optimize": analyse_optimize,
    "tune": analyse_tune,
    "oracle": analyse_oracle,
    "gradcheck": analyse_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dpditto", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment TOML file")
        p.add_argument("--seed", type=int, default=None, help="override experiment.seed")
        p.add_argument("--out", default=None, help="output directory (overrides experiment.out)")
        p.add_argument("--workers", type=int, default=1, help="processes for sweeps")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.training = dataclasses.replace(cfg.training, seed=args.seed)
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        out = Path(args.out or cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        wl = build_workload(cfg)
        if args.command == "train":
            summary = command_train(cfg, wl, out, args.workers)
        else:
            summary = ANALYSES[args.command](cfg, wl, out)
    except INPUT_ERRORS as exc:
        print(f"dpditto: error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"dpditto: numerical failure: {exc}", file=sys.stderr)
        return 3

    summary = {"command": args.command, "seed": cfg.seed, **summary}
    _write_json(out / "summary.json", summary)
    _write_json(out / "manifest.json", {
        "command": args.command,
        "config_sha256": hashlib.sha256(cfg.raw_text.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "version": __version__,
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
    })
    return 0


def main() -> None:
    sys.exit(run())
