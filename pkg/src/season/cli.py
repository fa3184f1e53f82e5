"""Batch experiment runner.

    season run <config.json>        run a named experiment from a config file
    season verify <suite>           run property suites (core|identity|bounds|samplers|all)
    season train-discriminator ...  fit a discriminator between two distributions
    season refine ...               refine a discrete model with a checkpoint
    season sample ...               Langevin-sample a configured score field
    season bounds ...               assemble a generalization bound report

Exit codes: 0 success, 1 verify-suite failure, 2 config/validation error,
3 numeric failure (NaN or divergence).  Outputs are byte-identical for
identical config + seed; CSV floats carry 17 significant digits.
OUTPUT_DIR overrides the configured output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .discriminator import (
    TrainConfig,
    load_discriminator,
    save_discriminator,
    train,
)
from .distributions import DiscreteDistribution, gaussian_mixture, model_from_spec
from .errors import ConfigError, SeasonError
from .experiments import (
    bound_trial,
    identity_discrete_experiment,
    refinement_benefit_experiment,
)
from .generators import GENERATOR_NAMES, get_generator
from .refine import export_refined_csv, refine_discrete
from .samplers import LangevinConfig, export_samples_csv, langevin, w1_1d
from .verify import run_suite

EXIT_OK = 0
EXIT_SUITE_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_EXPERIMENTS = ("identity-discrete", "refine-1d", "bounds")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _json_dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _require(cfg: dict, key: str, types, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}", "missing required field")
    val = cfg[key]
    if not isinstance(val, types):
        raise ConfigError(f"{path}.{key}", f"expected {types}, got {type(val).__name__}")
    return val


def _output_dir(cfg: dict) -> Path:
    out = os.environ.get("OUTPUT_DIR") or cfg.get("output_dir", ".")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _generator_from(cfg: dict, default: str = "js_shifted"):
    name = cfg.get("generator", default)
    if name not in GENERATOR_NAMES:
        raise ConfigError("$.generator", f"unknown generator {name!r}")
    return get_generator(name)


def _run_identity(cfg: dict, out: Path) -> None:
    seed = _require(cfg, "seed", int, "$")
    n_instances = int(cfg.get("n_instances", 100))
    rows = identity_discrete_experiment(n_instances=n_instances, seed=seed)
    with open(out / "identity_terms.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance_id", "d_H", "D_fH", "gain", "residual"])
        for r in rows:
            writer.writerow([r["instance_id"], _fmt(r["d_H"]), _fmt(r["D_fH"]),
                             _fmt(r["gain"]), _fmt(r["residual"])])
    worst = max(r["residual"] for r in rows)
    if not math.isfinite(worst):
        raise FloatingPointError("identity residual is not finite")


def _run_refine_1d(cfg: dict, out: Path) -> None:
    seed = _require(cfg, "seed", int, "$")
    disc_cfg = cfg.get("discriminator", {})
    sampler_cfg = cfg.get("sampler", {})
    result = refinement_benefit_experiment(
        seed,
        k_levels=int(sampler_cfg.get("k_levels", 16)),
        t_horizon=float(sampler_cfg.get("t_horizon", 2.0)),
        n_chains=int(sampler_cfg.get("n_chains", 2000)),
        disc_width=int(disc_cfg.get("width", 16)),
        disc_steps=int(disc_cfg.get("steps", 300)),
        disc_lr=float(disc_cfg.get("lr", 0.25)),
        keep_samples=True,
    )
    export_samples_csv(out / "samples_base.csv", result.samples_unguided, seed)
    export_samples_csv(out / "samples_refined.csv", result.samples_guided, seed)
    _json_dump(out / "w1_report.json", {
        "seed": seed,
        "w1_base": result.w1_unguided,
        "w1_refined": result.w1_guided,
        "improved": result.improved,
    })
    if not (math.isfinite(result.w1_guided) and math.isfinite(result.w1_unguided)):
        raise FloatingPointError("Wasserstein distances are not finite")


def _run_bounds(cfg: dict, out: Path) -> None:
    seed = _require(cfg, "seed", int, "$")
    gen = _generator_from(cfg)
    n = int(cfg.get("n", 200))
    delta = float(cfg.get("delta", 0.05))
    report = bound_trial(seed, gen_name=gen.name, n=n, delta=delta)
    payload = report.to_dict()
    payload["seed"] = seed
    payload["generator"] = gen.name
    _json_dump(out / "bound_report.json", payload)


def cmd_run(args) -> int:
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if not isinstance(cfg, dict):
            raise ConfigError("$", "config must be a JSON object")
        experiment = _require(cfg, "experiment", str, "$")
        out = _output_dir(cfg)
        if experiment == "identity-discrete":
            _run_identity(cfg, out)
        elif experiment == "refine-1d":
            _run_refine_1d(cfg, out)
        elif experiment == "bounds":
            _run_bounds(cfg, out)
        else:
            raise ConfigError("$.experiment", f"unknown experiment {experiment!r}; "
                                              f"choose from {_EXPERIMENTS}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, SeasonError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        reports = run_suite(args.suite)
    except KeyError:
        print(f"error: unknown suite {args.suite!r}", file=sys.stderr)
        return EXIT_CONFIG
    payload = {"suites": [r.to_dict() for r in reports],
               "passed": all(r.passed for r in reports)}
    print(json.dumps(payload, sort_keys=True, indent=2))
    return EXIT_OK if payload["passed"] else EXIT_SUITE_FAILED


def _load_distribution(path: str):
    spec = json.loads(Path(path).read_text())
    return model_from_spec(spec)


def cmd_train(args) -> int:
    try:
        data_nu = _load_distribution(args.data)
        data_mu = _load_distribution(args.model)
        gen = get_generator(args.generator)
        if isinstance(data_nu, DiscreteDistribution) and isinstance(data_mu, DiscreteDistribution):
            disc = train(gen, data_nu, data_mu)
            doc = {
                "version": 1, "kind": "tabular", "generator": gen.name,
                "support": disc.support.tolist(), "values": disc.values.tolist(),
            }
            Path(args.out).write_text(json.dumps(doc, sort_keys=True))
        else:
            cfg = TrainConfig(width=args.width, steps=args.steps,
                              step_size=args.lr, seed=args.seed)
            x_nu = data_nu.sample(args.seed, args.n_samples)
            x_mu = data_mu.sample(args.seed + 1, args.n_samples)
            disc = train(gen, x_nu, x_mu, cfg)
            save_discriminator(disc, args.out)
    except SeasonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_refine(args) -> int:
    try:
        mu = _load_distribution(args.model)
        if not isinstance(mu, DiscreteDistribution):
            raise ConfigError("$.model", "refine subcommand expects a discrete model")
        disc = load_discriminator(args.disc)
        gen = disc.generator or get_generator(args.generator)
        export_refined_csv(args.out, mu, disc, gen)
    except SeasonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        model = _load_distribution(args.model)
        if isinstance(model, DiscreteDistribution):
            raise ConfigError("$.model", "sampling needs a continuous model")
        cfg = LangevinConfig(step_size=args.step_size, n_steps=args.steps,
                             n_chains=args.chains, dim=model.dim, seed=args.seed)
        batch = langevin(model.score, cfg)
        export_samples_csv(args.out, batch, args.seed)
    except SeasonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        report = bound_trial(args.seed, gen_name=args.generator, n=args.n, delta=args.delta)
    except SeasonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    payload = report.to_dict()
    payload["seed"] = args.seed
    _json_dump(Path(args.out), payload)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="season", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("config")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run a property suite")
    p_verify.add_argument("suite", choices=["core", "identity", "bounds", "samplers", "all"])
    p_verify.set_defaults(func=cmd_verify)

    p_train = sub.add_parser("train-discriminator", help="fit a discriminator")
    p_train.add_argument("--data", required=True, help="JSON distribution spec (nu)")
    p_train.add_argument("--model", required=True, help="JSON distribution spec (mu)")
    p_train.add_argument("--generator", default="js_shifted", choices=GENERATOR_NAMES)
    p_train.add_argument("--width", type=int, default=32)
    p_train.add_argument("--steps", type=int, default=500)
    p_train.add_argument("--lr", type=float, default=0.1)
    p_train.add_argument("--n-samples", type=int, default=2000)
    p_train.add_argument("--seed", type=int, required=True)
    p_train.add_argument("--out", required=True)
    p_train.set_defaults(func=cmd_train)

    p_refine = sub.add_parser("refine", help="refine a discrete model")
    p_refine.add_argument("--model", required=True)
    p_refine.add_argument("--disc", required=True)
    p_refine.add_argument("--generator", default="js_shifted", choices=GENERATOR_NAMES)
    p_refine.add_argument("--out", required=True)
    p_refine.set_defaults(func=cmd_refine)

    p_sample = sub.add_parser("sample", help="Langevin-sample a continuous model")
    p_sample.add_argument("--model", required=True)
    p_sample.add_argument("--step-size", type=float, default=1e-3)
    p_sample.add_argument("--steps", type=int, default=1000)
    p_sample.add_argument("--chains", type=int, default=1000)
    p_sample.add_argument("--seed", type=int, required=True)
    p_sample.add_argument("--out", required=True)
    p_sample.set_defaults(func=cmd_sample)

    p_bounds = sub.add_parser("bounds", help="assemble a generalization bound report")
    p_bounds.add_argument("--generator", default="js_shifted", choices=GENERATOR_NAMES)
    p_bounds.add_argument("--n", type=int, default=200)
    p_bounds.add_argument("--delta", type=float, default=0.05)
    p_bounds.add_argument("--seed", type=int, required=True)
    p_bounds.add_argument("--out", required=True)
    p_bounds.set_defaults(func=cmd_bounds)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
