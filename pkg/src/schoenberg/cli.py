"""Command-line front end.

Every command reads one JSON config (``--config``) plus ``--set key=value``
overrides, writes its artifacts under ``--out`` and finishes with
``summary.json``. Exit codes: 0 success, 2 config error, 3 data error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import _backend
from .config import RunConfig
from .errors import (ConfigError, ConvergenceError, DimensionError, InfeasibleRadiusError,
                     InvalidDatasetError, SchoenbergError, StabilityError, StalePlanError)
from .evaluation import kmeans_label, svm_error, svm_train
from .features import draw_features, feature_map, gaussian_bank, load_bank, save_bank
from .io import ingest, read_particles, write_dataset, write_histogram, write_particles, write_rows
from .langevin import LangevinConfig, run_langevin, train
from .lsh import (binary_codes, binary_family, load_codes, pairwise_code_distances, qary_codes,
                  qary_family, save_codes)
from .meanfield import DensityGrid, MeanFieldOperator, compare_particles_to_density, simulate
from .measure import LabeledDataset, ParticleEnsemble, RandomSource, SupportInterval
from .mmd import TwoSampleData, estimate_power, mmd_unbiased, permutation_threshold
from .objective import KernelUnderMeasure, alignment
from .synthetic import random_projection, variance_task

log = logging.getLogger("schoenberg")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# fixed child keys so each command draws from its own stream
_DATA, _REFERENCE, _TRAIN, _FEATURES, _HASH, _TEST, _SPLIT, _SVM, _KMEANS, _PDE = range(10)


def _support(cfg) -> SupportInterval:
    return SupportInterval(cfg["support_lower"], cfg["support_upper"])


def _dataset(cfg, root: RandomSource, key="data") -> LabeledDataset:
    if cfg[key]:
        return ingest(cfg[key], cfg["data_format"])
    proj = None
    if cfg["reduced_dim"]:
        proj = random_projection(cfg["dim"], cfg["reduced_dim"], root.child(_DATA, 1))
    return variance_task(cfg["samples"], cfg["dim"], cfg["lambda"], root.child(_DATA, 0),
                         scale=cfg["data_scale"], projection=proj)


def _reference(cfg, root: RandomSource) -> ParticleEnsemble:
    return ParticleEnsemble.uniform(cfg["particles"], _support(cfg), root.child(_REFERENCE))


def _ensemble(cfg, root: RandomSource) -> ParticleEnsemble:
    if cfg["particles_path"]:
        return read_particles(cfg["particles_path"], _support(cfg))
    return _reference(cfg, root)


def _langevin(cfg) -> LangevinConfig:
    return LangevinConfig(step_size=cfg["step_size"], inverse_temperature=cfg["inverse_temperature"],
                          total_steps=cfg["total_steps"], gamma=cfg["gamma"],
                          epsilon=cfg["epsilon"], radius=cfg["radius"],
                          bisection_tolerance=cfg["bisection_tolerance"], seed=cfg["seed"],
                          particle_scaling=cfg["particle_scaling"], step_decay=cfg["step_decay"],
                          snapshot_every=cfg["snapshot_every"])


def _split(data: LabeledDataset, cfg, root):
    if cfg["test_data"]:
        return data, ingest(cfg["test_data"], cfg["data_format"])
    order = root.child(_SPLIT).permutation(data.count)
    cut = max(2, int(round(data.count * (1 - cfg["test_fraction"]))))
    return data.subset(order[:cut]), data.subset(order[cut:])


def cmd_synth_data(cfg, root, out: Path):
    data = _dataset(cfg, root)
    write_dataset(out / "data.csv", data)
    return {"rows": data.count, "dimension": data.dimension}


def cmd_train_kernel(cfg, root, out: Path):
    data = _dataset(cfg, root)
    ref = _reference(cfg, root)
    lcfg = _langevin(cfg)
    res = train(lcfg, data, ref, root.child(_TRAIN))
    write_particles(out / "particles.csv", res.ensemble)
    write_particles(out / "reference.csv", ref)
    write_rows(out / "trials.csv", ["multiplier", "constraint", "feasible"],
               ([t["multiplier"], t["constraint"], int(t["feasible"])] for t in res.trials))
    if res.trajectory:
        write_rows(out / "trajectory.csv", ["step", "index", "value"],
                   ((s, i, v) for s, xs in res.trajectory for i, v in enumerate(xs.tolist())))
    return {"multiplier": res.multiplier, "bracket": list(res.bracket),
            "constraint_value": res.constraint_value, "trials": len(res.trials),
            "alignment_initial": alignment(KernelUnderMeasure(ref), data),
            "alignment_trained": alignment(KernelUnderMeasure(res.ensemble), data)}


def cmd_features(cfg, root, out: Path):
    data = _dataset(cfg, root)
    ens = _ensemble(cfg, root)
    bank = draw_features(ens, cfg["features"], data.dimension, root.child(_FEATURES))
    save_bank(bank, out / "features.csv")
    phi = feature_map(bank, data.features)
    write_rows(out / "mapped.csv", ["label"] + [f"f{k}" for k in range(bank.count)],
               ([int(y)] + row for y, row in zip(data.labels, phi.tolist())))
    return {"features": bank.count, "dimension": bank.dimension}


def _hash_family(cfg, ens, dim, root):
    rng = root.child(_HASH)
    if cfg["alphabet"] == 2:
        fam = binary_family(ens, cfg["bits"], dim, rng)
        return lambda x: binary_codes(fam, x)
    fam = qary_family(ens, cfg["alphabet"], cfg["code_length"], cfg["features"], dim, rng)
    return lambda x: qary_codes(fam, x)


def cmd_lsh_build(cfg, root, out: Path):
    data = _dataset(cfg, root)
    ens = _ensemble(cfg, root)
    codes = _hash_family(cfg, ens, data.dimension, root)(data.features)
    save_codes(out / "codes.bin", codes, cfg["alphabet"], cfg["seed"])
    return {"rows": int(codes.shape[0]), "code_length": int(codes.shape[1]),
            "alphabet": cfg["alphabet"]}


def cmd_lsh_query(cfg, root, out: Path):
    if not cfg["codes_path"] or not cfg["queries"]:
        raise ConfigError("lsh-query needs codes_path and queries", "cli")
    database, q, seed = load_codes(cfg["codes_path"])
    if q != cfg["alphabet"] or seed != cfg["seed"]:
        raise ConfigError(f"code file built with alphabet {q}, seed {seed}", "cli")
    queries = ingest(cfg["queries"], cfg["data_format"])
    ens = _ensemble(cfg, root)
    codes = _hash_family(cfg, ens, queries.dimension, root)(queries.features)
    if codes.shape[1] != database.shape[1]:
        raise DimensionError("query codes and database codes differ in length", "lsh")
    dist = pairwise_code_distances(codes, database, q)
    k = min(cfg["neighbors"], database.shape[0])
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    write_rows(out / "neighbors.csv", ["query", "rank", "index", "distance"],
               ((i, r, int(j), int(dist[i, j])) for i in range(dist.shape[0])
                for r, j in enumerate(order[i])))
    return {"queries": int(dist.shape[0]), "neighbors": k}


def cmd_mmd_test(cfg, root, out: Path):
    rng = root.child(_TEST)
    d0 = cfg["reduced_dim"] or cfg["dim"]
    if cfg["particles_path"]:
        bank = draw_features(_ensemble(cfg, root), cfg["features"], d0, root.child(_FEATURES))
    else:
        bank = gaussian_bank(cfg["bandwidth_sq"], cfg["features"], d0, root.child(_FEATURES))
    metrics = {}
    if cfg["data"]:
        data = ingest(cfg["data"], cfg["data_format"])
        pair = TwoSampleData(data.features[data.labels > 0], data.features[data.labels < 0])
        stat = mmd_unbiased(pair, bank)
        tau = permutation_threshold(pair, bank, cfg["trials"], rng.child(0))
        metrics.update(statistic=stat, threshold=tau, decision="H1" if stat > tau else "H0")
    else:
        curve = estimate_power(cfg["lambda"], (cfg["dim"], d0), (cfg["m"], cfg["n"]),
                               cfg["trials"], cfg["tau_grid"], bank, rng.child(1))
        write_rows(out / "power.csv", ["tau", "power"], curve)
        metrics["power"] = [p for _, p in curve]
    return metrics


def cmd_pde_simulate(cfg, root, out: Path):
    data = _dataset(cfg, root)
    sup = _support(cfg)
    op = MeanFieldOperator(data, sup, cfg["bins"], cfg["gamma"], include_diagonal=True)
    grids = simulate(DensityGrid.uniform(cfg["bins"], sup), op, cfg["inverse_temperature"],
                     cfg["horizons"], max_dt=cfg["dt"] or None)
    metrics = {"horizons": cfg["horizons"], "clipped_mass": grids[-1].clipped_mass if grids else 0.0}
    for i, g in enumerate(grids):
        write_histogram(out / f"density_{i}.csv", g)
    if cfg["compare_particles"]:
        lcfg = _langevin(cfg)
        ens = ParticleEnsemble.uniform(cfg["compare_particles"], sup, root.child(_PDE, 0))
        rng = root.child(_PDE, 1)
        dists, t = [], 0.0
        for g in grids:
            steps = int(round((g.time - t) / cfg["step_size"]))
            if steps:
                ens = run_langevin(ens, 0.0, lcfg, data, None, rng, steps=steps)
            t = g.time
            dists.append(compare_particles_to_density(ens, g)[0])
        metrics["particle_l1"] = dists
    return metrics


def _bank_for_svm(cfg, root, dim):
    if cfg["particles_path"]:
        return draw_features(_ensemble(cfg, root), cfg["features"], dim, root.child(_FEATURES))
    return gaussian_bank(cfg["bandwidth_sq"], cfg["features"], dim, root.child(_FEATURES))


def cmd_svm(cfg, root, out: Path):
    train_set, test_set = _split(_dataset(cfg, root), cfg, root)
    bank = _bank_for_svm(cfg, root, train_set.dimension)
    ftr, fte = feature_map(bank, train_set.features), feature_map(bank, test_set.features)
    model = svm_train(ftr, train_set.labels, cfg["svm_lambda"], cfg["epochs"], root.child(_SVM))
    write_rows(out / "objective.csv", ["epoch", "objective"], enumerate(model.history, 1))
    return {"train_error": svm_error(model, ftr, train_set.labels),
            "test_error": svm_error(model, fte, test_set.labels),
            "train_rows": train_set.count, "test_rows": test_set.count}


def cmd_kmeans_label(cfg, root, out: Path):
    data = _dataset(cfg, root)
    res = kmeans_label(data.features, cfg["clusters"], root.child(_KMEANS), cfg["kmeans_iterations"])
    write_dataset(out / "labeled.csv", LabeledDataset(data.features, res.labels))
    write_rows(out / "assignments.csv", ["index", "cluster"], enumerate(res.assignments.tolist()))
    return {"positive_cluster": res.positive_cluster, "iterations": res.iterations,
            "wcss": res.wcss_history[-1]}


COMMANDS = {
    "synth-data": cmd_synth_data,
    "train-kernel": cmd_train_kernel,
    "features": cmd_features,
    "lsh-build": cmd_lsh_build,
    "lsh-query": cmd_lsh_query,
    "mmd-test": cmd_mmd_test,
    "pde-simulate": cmd_pde_simulate,
    "svm": cmd_svm,
    "kmeans-label": cmd_kmeans_label,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (InvalidDatasetError, DimensionError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ConvergenceError, InfeasibleRadiusError, StabilityError, StalePlanError)):
        return EXIT_NUMERIC
    if isinstance(exc, SchoenbergError):
        return EXIT_NUMERIC
    return EXIT_CONFIG


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v) if math.isfinite(v) else str(float(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schoenberg", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON file with settings")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one setting; repeatable")
    p.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    start = time.perf_counter()
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        cfg.override(args.set)
        if args.seed is not None:
            cfg.override([f"seed={args.seed}"])
        out.mkdir(parents=True, exist_ok=True)
        log.info("running %s with backend %s", args.command, _backend.NAME)
        metrics = COMMANDS[args.command](cfg, RandomSource(cfg["seed"]), out)
    except (SchoenbergError, OSError, ValueError) as exc:
        code = _exit_code(exc)
        module = getattr(exc, "module", None) or "cli"
        err = {"command": args.command, "status": "error", "exit_code": code,
               "error": {"type": type(exc).__name__, "module": module, "message": str(exc)}}
        print(json.dumps(err), file=sys.stderr)
        return code
    summary = {"command": args.command, "status": "ok", "seed": cfg["seed"],
               "config": cfg, "config_hash": cfg.digest(), "backend": _backend.NAME,
               "wall_time": time.perf_counter() - start, "metrics": _jsonable(metrics)}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    log.info("wrote %s", out / "summary.json")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
