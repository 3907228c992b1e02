"""Command-line entry point: ``vpflow run|check-grads|sweep|ablate-md``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .harness import (
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    build_problem,
    load_config,
    output_dir_for,
    preset_names,
    run_experiment,
)
from .mixture import ParticleMixture
from .oracles import check_bnn_modes, check_mixture, check_points, check_target
from .targets import BnnTarget

ALIASES = {
    "K": "init.K",
    "eta": "flow.eta",
    "S": "flow.samples_per_particle",
    "algorithm": "flow.algorithm",
    "iterations": "flow.iterations",
    "md_weights": "flow.md_weights",
    "stabilize": "flow.stabilize",
}


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_vary(spec: str) -> tuple[str, list]:
    """``"K=1,3,10"`` -> ``("init.K", [1, 3, 10])``."""
    key, sep, values = spec.partition("=")
    if not sep or not values:
        raise ConfigError(f"--vary expects KEY=v1,v2,..., got {spec!r}")
    return ALIASES.get(key, key), [_parse_value(v) for v in values.split(",")]


def derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _final(records) -> dict:
    last = records[-1]
    return {"elbo_neg": last.elbo_neg_estimate, "kl": last.kl_estimate, "pred_loss": last.predictive_loss}


def _run_job(job):
    cfg_dict, base_dir, out = job
    cfg = ExperimentConfig.from_dict(cfg_dict, base_dir=base_dir)
    return _final(run_experiment(cfg, output_dir=out))


def _run_many(jobs, n_workers):
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(_run_job, jobs))
    return [_run_job(j) for j in jobs]


def _fmt(x):
    return "-" if x is None else f"{x:.4f}"


def _default_out(cfg, out_arg):
    if out_arg:
        return Path(out_arg)
    return output_dir_for(cfg) or Path("runs") / cfg.name


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = _default_out(cfg, args.output)
    records = run_experiment(cfg, output_dir=out)
    f = _final(records)
    print(f"{cfg.name}: {len(records)} records -> {out}")
    print(f"final elbo_neg {_fmt(f['elbo_neg'])}  kl {_fmt(f['kl'])}  pred_loss {_fmt(f['pred_loss'])}")
    return 0


def cmd_check_grads(args) -> int:
    specs = args.configs or [n for n in preset_names()]
    all_ok = True
    for spec in specs:
        cfg = load_config(spec)
        problem = build_problem(cfg)
        target = problem.target
        rng = np.random.default_rng(args.seed)
        scale = 2.0 if cfg.target["kind"] == "gmm" else 0.5
        points = check_points(target, args.points, rng, scale)
        if isinstance(target, BnnTarget):
            # both diagonal modes are checked, Hutchinson at the reference probe count
            results = check_target(target, points, cfg.name)[:1] + check_bnn_modes(target, points, cfg.name)
        else:
            results = check_target(target, points, cfg.name)
        K = int(cfg.init.get("K", 3))
        m = ParticleMixture(rng.standard_normal((K, target.dim)), rng.uniform(0.5, 3.0, (K, target.dim)),
                            rng.dirichlet(np.ones(K)))
        results += check_mixture(m, 1.5 * rng.standard_normal((args.points, target.dim)), f"{cfg.name} q")
        print(f"[{spec}]")
        for r in results:
            print("  " + r.line())
        all_ok &= all(r.ok for r in results)
    return 0 if all_ok else 1


def _seed_changes(i, seed):
    return {"seed": seed, "flow.seed": seed}


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    key, values = parse_vary(args.vary)
    root = _default_out(cfg, args.output)
    leaf = key.rsplit(".", 1)[-1]
    jobs = []
    for i, v in enumerate(values):
        seed = derived_seed(cfg.seed, i)
        c = cfg.with_changes(**{key: v}, **_seed_changes(i, seed))
        jobs.append((c.to_dict(), str(cfg.base_dir), str(root / f"{leaf}={v}")))
    results = _run_many(jobs, args.jobs)
    print(f"{leaf:>12s} {'elbo_neg':>10s} {'kl':>10s} {'pred_loss':>10s}")
    for v, f in zip(values, results):
        print(f"{str(v):>12s} {_fmt(f['elbo_neg']):>10s} {_fmt(f['kl']):>10s} {_fmt(f['pred_loss']):>10s}")
    return 0


def cmd_ablate_md(args) -> int:
    cfg = load_config(args.config)
    root = _default_out(cfg, args.output)
    jobs = []
    for md in (True, False):
        for i in range(args.seeds):
            seed = cfg.seed + i
            c = cfg.with_changes(**{"flow.md_weights": md}, **_seed_changes(i, seed))
            tag = "md" if md else "no-md"
            jobs.append((c.to_dict(), str(cfg.base_dir), str(root / tag / f"seed-{seed}")))
    results = _run_many(jobs, args.jobs)
    n = args.seeds
    print(f"{'variant':>8s} {'elbo_neg':>10s} {'kl':>10s} {'pred_loss':>10s}   (mean over {n} seeds)")
    for tag, chunk in (("MD", results[:n]), ("w/o MD", results[n:])):
        row = []
        for k in ("elbo_neg", "kl", "pred_loss"):
            vals = [f[k] for f in chunk if f[k] is not None]
            row.append(_fmt(float(np.mean(vals))) if vals else "-")
        print(f"{tag:>8s} " + " ".join(f"{x:>10s}" for x in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vpflow", description="Particle mixture variational inference experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    presets = ", ".join(preset_names())

    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("config", help=f"config file or preset ({presets})")
    r.add_argument("--output", help="output directory (default: $VPFLOW_OUTPUT_DIR/<name>, then the config's output, then runs/<name>)")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-grads", help="compare derivatives against finite differences")
    c.add_argument("configs", nargs="*", help="config files or presets (default: every preset)")
    c.add_argument("--points", type=int, default=20, help="random points per target")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check_grads)

    s = sub.add_parser("sweep", help="run a config over several values of one key")
    s.add_argument("config")
    s.add_argument("--vary", required=True, help="KEY=v1,v2,... (K, eta, S, algorithm or a dotted key)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate-md", help="compare runs with and without mirror-descent weight updates")
    a.add_argument("config")
    a.add_argument("--seeds", type=int, default=1)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--output")
    a.set_defaults(func=cmd_ablate_md)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ConfigError) as exc:
        print(f"vpflow: error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"vpflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
