"""Command-line entry point: ``vmpomc {run,sweep,ed,measure,autocorr}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import ed
from . import observables as obs
from .config import ExperimentConfig, load_config
from .errors import VmpomcError
from .models import SX, SZ
from .mpo import init_random, load_checkpoint, save_checkpoint
from .optimizer import default_threads, run_optimization
from .sampler import autocorrelation, burn_in, magnetization_series, new_chain, sample_configs

logger = logging.getLogger("vmpomc")

TRAJECTORY_HEADER = "# vmpomc trajectory v1"
SWEEP_HEADER = "# vmpomc sweep v1"
BASE_COLUMNS = ("iteration", "cost", "cost_per_site", "delta", "acceptance_rate", "wall_ms")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_table(path: Path, header: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def trajectory_rows(trajectory, names):
    for r in trajectory:
        yield [r.iteration, r.cost, r.cost_per_site, r.delta, r.acceptance_rate, r.wall_ms] + [
            r.observables[n] for n in names]


def _initial_mpo(cfg: ExperimentConfig, seed: int):
    n = cfg.model.n_sites
    if cfg.init_checkpoint:
        mpo = load_checkpoint(cfg.init_checkpoint, n_sites=n)
        if mpo.chi != cfg.chi:
            raise VmpomcError(f"init_checkpoint has chi={mpo.chi}, config asks for chi={cfg.chi}")
        return mpo
    return init_random(cfg.chi, n, seed=seed if cfg.init_seed is None else cfg.init_seed,
                       scale=cfg.init_scale)


def _ed_summary(model, mpo=None) -> dict:
    lv = ed.build_dense_liouvillian(model)
    rho = ed.steady_state(lv)
    out = {"ed_observables": {**ed.magnetizations(rho), "purity": ed.purity(rho), "renyi2": ed.renyi2(rho)}}
    if mpo is not None:
        dense = obs.reconstruct_dense(mpo)
        dense = dense / np.trace(dense)
        clipped, weight = ed.psd_clip(dense)
        out["fidelity"] = ed.uhlmann_fidelity(clipped, rho)
        out["clipped_weight"] = weight
    return out


def optimize(cfg: ExperimentConfig, out: Path, mpo=None, threads=None, tag="") -> dict:
    """One optimization with trajectory, checkpoints and summary written to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    opt = cfg.optimizer if threads is None else cfg.optimizer.replace(threads=threads)
    if mpo is None:
        mpo = _initial_mpo(cfg, opt.seed)
    every = cfg.checkpoint_every

    def checkpoint(record, state):
        if every and (record.iteration + 1) % every == 0:
            save_checkpoint(state, out / f"{tag}ckpt_{record.iteration + 1:06d}.txt")

    result = run_optimization(mpo, cfg.model, opt, callback=checkpoint)
    names = list(opt.observables)
    write_table(out / f"{tag}trajectory.csv", TRAJECTORY_HEADER, list(BASE_COLUMNS) + names,
                trajectory_rows(result.trajectory, names))
    save_checkpoint(result.mpo, out / f"{tag}final.ckpt")
    costs = result.costs()
    tail = costs[-min(len(costs), 100):] if len(costs) else costs
    summary = {
        "model": cfg.model.__dict__,
        "chi": result.mpo.chi,
        "method": opt.method,
        "seed": opt.seed,
        "threads": opt.threads or default_threads(),
        "n_iterations": len(result.trajectory),
        "final_cost": float(costs[-1]) if len(costs) else None,
        "trailing_mean_cost_per_site": float(tail.mean() / cfg.model.n_sites) if len(tail) else None,
        "observables": obs.evaluate(result.mpo, names),
    }
    if cfg.target_cost_per_site is not None:
        met = summary["trailing_mean_cost_per_site"] is not None and \
            summary["trailing_mean_cost_per_site"] < cfg.target_cost_per_site
        summary["converged"] = bool(met)
        if not met:
            logger.warning("convergence target C/N < %g not met", cfg.target_cost_per_site)
    if cfg.ed_compare and cfg.model.n_sites <= ed.MAX_DENSE_SITES:
        summary |= _ed_summary(cfg.model, result.mpo)
    (out / f"{tag}summary.json").write_text(json.dumps(summary, indent=2, default=float) + "\n")
    return summary | {"_mpo": result.mpo}


def cmd_run(args) -> int:
    cfg = _load(args)
    summary = optimize(cfg, Path(args.out or cfg.output_dir), threads=args.workers)
    summary.pop("_mpo")
    print(json.dumps(summary, indent=2, default=float))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if cfg.sweep is None:
        raise VmpomcError("config has no [sweep] section")
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(cfg.observables)
    axis = cfg.sweep
    rows = []
    prev = None
    for i, value in enumerate(axis.values):
        point = cfg.replace(model=cfg.model.replace(**{axis.parameter: value}))
        try:
            s = optimize(point, out, mpo=prev, threads=args.workers, tag=f"p{i:03d}_")
        except VmpomcError as exc:
            logger.error("sweep point %s=%g failed: %s", axis.parameter, value, exc)
            rows.append([value, "failed", float("nan"), float("nan")] + [float("nan")] * len(names)
                        + ([float("nan")] if cfg.ed_compare else []))
            continue
        prev = s["_mpo"]
        row = [value, "ok", s["final_cost"], s["trailing_mean_cost_per_site"]] + [
            s["observables"][n] for n in names]
        if cfg.ed_compare:
            row.append(s.get("fidelity", float("nan")))
        rows.append(row)
    cols = [axis.parameter, "status", "final_cost", "trailing_cost_per_site"] + names
    if cfg.ed_compare:
        cols.append("fidelity")
    write_table(out / "sweep.csv", SWEEP_HEADER, cols, rows)
    return 0


def cmd_ed(args) -> int:
    cfg = _load(args)
    model = cfg.model
    lv = ed.build_dense_liouvillian(model)
    rho = ed.steady_state(lv)
    residual = float(np.linalg.norm(lv.matrix @ ed.rho_to_vec(rho)))
    n = model.n_sites
    result = {**ed.magnetizations(rho), "purity": ed.purity(rho), "renyi2": ed.renyi2(rho),
              "residual": residual,
              "czz": [ed.correlation(rho, SZ, SZ, r).real for r in range(1, n)]}
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ed.json").write_text(json.dumps(result, indent=2) + "\n")
    if args.save_rho:
        np.save(out / "rho_ed.npy", rho)
    print(json.dumps(result, indent=2))
    return 0


def cmd_measure(args) -> int:
    mpo = load_checkpoint(args.checkpoint)
    names = [n.strip() for n in args.observables.split(",") if n.strip()] if args.observables else \
        ["sx", "sy", "sz", "purity", "renyi2"]
    values = obs.evaluate(mpo, names)
    table = [{"r": r, "czz": obs.real_value(obs.two_body_correlation(mpo, SZ, SZ, r)),
              "cxx": obs.real_value(obs.two_body_correlation(mpo, SX, SX, r))}
             for r in range(1, mpo.n_sites)]
    result = {"n_sites": mpo.n_sites, "chi": mpo.chi, "observables": values, "correlations": table}
    text = json.dumps(result, indent=2, default=fmt)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "measure.json").write_text(text + "\n")
    print(text)
    return 0


def cmd_autocorr(args) -> int:
    mpo = load_checkpoint(args.checkpoint)
    state = new_chain(mpo, args.seed or 0)
    burn_in(state, mpo, args.burn_in)
    configs = sample_configs(state, mpo, args.samples)
    cols = {}
    for name, op in (("sx", SX), ("sz", SZ)):
        series = magnetization_series(configs, op)
        cols[name] = autocorrelation(series, args.max_lag, obs.born_average(mpo, op))
    rows = [[t] + [cols[k][t].real for k in cols] for t in range(args.max_lag + 1)]
    header = ["lag"] + [f"gamma_{k}" for k in cols]
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        write_table(Path(args.out) / "autocorr.csv", "# vmpomc autocorrelation v1", header, rows)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return 0


def _load(args) -> ExperimentConfig:
    if not args.config:
        raise VmpomcError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(optimizer=cfg.optimizer.replace(seed=args.seed))
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmpomc", description="Variational MPO steady states of open spin chains")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment configuration file")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--workers", type=int, help="thread-pool size (default: $VMPOMC_WORKERS or CPU count)")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="optimize one configuration").set_defaults(func=cmd_run)
    sub.add_parser("sweep", parents=[common], help="warm-started parameter sweep").set_defaults(func=cmd_sweep)
    e = sub.add_parser("ed", parents=[common], help="exact steady state (N <= 7)")
    e.add_argument("--save-rho", action="store_true", help="also write the dense matrix as rho_ed.npy")
    e.set_defaults(func=cmd_ed)
    m = sub.add_parser("measure", parents=[common], help="contraction observables of a checkpoint")
    m.add_argument("checkpoint")
    m.add_argument("--observables", help="comma list, e.g. sx,sz,renyi2,czz_1")
    m.set_defaults(func=cmd_measure)
    a = sub.add_parser("autocorr", parents=[common], help="autocorrelation of sampled magnetizations")
    a.add_argument("checkpoint")
    a.add_argument("--samples", type=int, default=100000)
    a.add_argument("--max-lag", type=int, default=10)
    a.add_argument("--burn-in", type=int, default=1000)
    a.set_defaults(func=cmd_autocorr)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VmpomcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
