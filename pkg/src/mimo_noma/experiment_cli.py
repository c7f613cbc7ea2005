"""Command-line front end: the three experiments with CSV persistence.

Subcommands:
  sim angle-sweep    sum SE of the single-cell two-user setup vs interferer angle
  sim variance-sweep channel-orthogonality variance vs interferer angle
  sim cluster-sweep  cell-averaged sum SE of the 4-cell clusterized setup vs K

Progress goes to stderr; only the CSV is written to the output path, so runs
are machine-consumable and byte-reproducible for a given config and seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from .network_scenario import (
    DEFAULT_ASD_DEG,
    DEFAULT_CELL_SIDE_M,
    DEFAULT_NOISE_DBM,
    DEFAULT_P_DBM,
    DEFAULT_TAU_C,
    TWO_USER_DISTANCE_M,
    ClusterSpec,
    build_cluster_scenario,
    build_two_user_scenario,
    _geometry_for,
)
from .receiver_se import aggregate, run_monte_carlo
from .spatial_channel import (
    AngularSpec,
    correlation_2d,
    correlation_3d,
    favorable_propagation_variance,
)
from .network_scenario import BS_HEIGHT_M, UE_HEIGHT_M

CSV_COLUMNS = [
    "experiment",
    "model",
    "scheme",
    "combiner",
    "M",
    "N",
    "K",
    "L",
    "sweep_var",
    "sweep_value",
    "sum_se_mean",
    "sum_se_stderr",
    "trials",
    "seed",
]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Run configuration; defaults reproduce the reference network setup."""

    model: str = "3d"
    L: int = 4
    K: list = field(default_factory=lambda: [32])
    M: int = 64
    N: list = field(default_factory=lambda: [2, 4, 8])
    asd_deg: float = DEFAULT_ASD_DEG
    cell_side_m: float = DEFAULT_CELL_SIDE_M
    cluster_radius_m: float = 10.0
    min_bs_dist_m: float = 25.0
    tau_c: int = DEFAULT_TAU_C
    p_dbm: float = DEFAULT_P_DBM
    noise_dbm: float = DEFAULT_NOISE_DBM
    ue_distance_m: float = TWO_USER_DISTANCE_M
    angle_start: float = -180.0
    angle_stop: float = 180.0
    angle_step: float = 2.0
    trials: int | None = None  # default depends on the experiment
    drops: int = 20
    seed: int = 0
    workers: int = 1

    def angles(self) -> np.ndarray:
        if self.angle_step <= 0:
            raise ConfigError("angle_step must be positive")
        return np.arange(self.angle_start, self.angle_stop + 1e-9, self.angle_step)

    def validate(self):
        if self.model not in ("2d", "3d"):
            raise ConfigError(f"model must be '2d' or '3d', got {self.model!r}")
        for key in ("M", "L", "tau_c"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        for key in ("asd_deg", "cell_side_m", "cluster_radius_m", "ue_distance_m"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.trials is not None and self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.angles().size == 0:
            raise ConfigError("angle grid is empty")
        if not self.K or not self.N:
            raise ConfigError("K and N grids must be non-empty")
        if any(k < 1 for k in self.K) or any(n < 1 for n in self.N):
            raise ConfigError("K and N values must be positive")
        if self.model == "3d" and round(self.M**0.5) ** 2 != self.M:
            raise ConfigError("3d model requires a perfect-square M")


def load_config(path: str | None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {path}")
        if key in ("K", "N") and isinstance(value, int):
            value = [value]
        setattr(cfg, key, value)
    return cfg


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


def format_float(x: float) -> str:
    return f"{x:.9g}"


def write_csv(records: list[dict], path: str):
    """Write result rows with the fixed column schema, 9 significant digits."""
    if not records:
        raise ValueError("no records to write")
    lines = [",".join(CSV_COLUMNS)]
    for rec in records:
        missing = [c for c in CSV_COLUMNS if c not in rec]
        if missing:
            raise ValueError(f"record missing columns {missing}")
        cells = []
        for col in CSV_COLUMNS:
            val = rec[col]
            cells.append(format_float(val) if isinstance(val, float) else str(val))
        lines.append(",".join(cells))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def _row(cfg, experiment, rec, sweep_var, sweep_value) -> dict:
    return {
        "experiment": experiment,
        "model": rec.model,
        "scheme": rec.scheme,
        "combiner": rec.combiner,
        "M": rec.M,
        "N": rec.N,
        "K": rec.K,
        "L": rec.L,
        "sweep_var": sweep_var,
        "sweep_value": float(sweep_value),
        "sum_se_mean": rec.sum_se_mean,
        "sum_se_stderr": rec.sum_se_stderr,
        "trials": rec.trials,
        "seed": rec.seed,
    }


def cmd_angle_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Sum SE of the two-user single-cell setup vs the interferer's angle."""
    cfg.validate()
    trials = cfg.trials if cfg.trials is not None else 2000
    angles = cfg.angles()
    pairs = (("mmimo", "mr"), ("mmimo", "mmse"), ("noma", "mr"), ("noma", "mmse"))
    records = []
    t0 = time.time()
    for n, angle in enumerate(angles):
        def factory(rng, angle=angle):
            return build_two_user_scenario(
                float(angle),
                cfg.model,
                M=cfg.M,
                asd_deg=cfg.asd_deg,
                N=2,
                ue_distance_m=cfg.ue_distance_m,
                tau_c=cfg.tau_c,
                p_dbm=cfg.p_dbm,
                noise_dbm=cfg.noise_dbm,
            )

        gammas, scen = run_monte_carlo(
            factory, pairs, trials=trials, seed=cfg.seed, workers=cfg.workers
        )
        for pair in pairs:
            rec = aggregate(gammas[pair], scen, *pair, seed=cfg.seed)
            records.append(_row(cfg, "angle-sweep", rec, "interferer_angle_deg", angle))
        _progress(
            f"angle-sweep [{cfg.model}] {n + 1}/{len(angles)} "
            f"(angle {angle:+.0f} deg, {time.time() - t0:.1f}s)"
        )
    return records


def cmd_variance_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Favorable-propagation variance vs angle; deterministic, no Monte-Carlo."""
    cfg.validate()
    angles = cfg.angles()
    M = cfg.M
    elevation = -float(
        np.rad2deg(np.arctan((BS_HEIGHT_M - UE_HEIGHT_M) / cfg.ue_distance_m))
    )
    geom2 = _geometry_for("2d", M)
    geom3 = _geometry_for("3d", M)
    ref2 = correlation_2d(geom2, AngularSpec(30.0, cfg.asd_deg), 1.0)
    ref3 = correlation_3d(
        geom3, AngularSpec(30.0, cfg.asd_deg, elevation_deg=elevation), 1.0
    )
    records = []
    for angle in angles:
        a = float(angle)
        v2 = favorable_propagation_variance(
            ref2, correlation_2d(geom2, AngularSpec(a, cfg.asd_deg), 1.0)
        )
        v3 = favorable_propagation_variance(
            ref3,
            correlation_3d(
                geom3, AngularSpec(a, cfg.asd_deg, elevation_deg=elevation), 1.0
            ),
        )
        for model, value in (("2d", v2), ("3d", v3), ("uncorrelated", 1.0 / M)):
            records.append(
                {
                    "experiment": "variance-sweep",
                    "model": model,
                    "scheme": "variance",
                    "combiner": "none",
                    "M": M,
                    "N": 1,
                    "K": 2,
                    "L": 1,
                    "sweep_var": "interferer_angle_deg",
                    "sweep_value": a,
                    "sum_se_mean": float(value),
                    "sum_se_stderr": 0.0,
                    "trials": 1,
                    "seed": cfg.seed,
                }
            )
    _progress(f"variance-sweep done ({len(angles)} angles)")
    return records


def cmd_cluster_sweep(cfg: ExperimentConfig) -> list[dict]:
    """Cell-averaged sum SE of the multi-cell clusterized setup vs K."""
    cfg.validate()
    for k in cfg.K:
        for n in cfg.N:
            if k % n != 0:
                raise ConfigError(f"K={k} is not a multiple of N={n}")
    trials = cfg.trials if cfg.trials is not None else 500
    cluster = ClusterSpec(
        radius_m=cfg.cluster_radius_m, min_bs_dist_m=cfg.min_bs_dist_m
    )
    records = []
    t0 = time.time()
    # N=1 runs the classical pipeline; spreading degenerates to the scalar 1
    plans = [(k, 1, (("mmimo", "mr"), ("mmimo", "mmse"))) for k in cfg.K]
    plans += [
        (k, n, (("noma", "mr"), ("noma", "mmse"))) for k in cfg.K for n in cfg.N
    ]
    for k, n, pairs in plans:
        def factory(rng, k=k, n=n):
            return build_cluster_scenario(
                K=k,
                N=n,
                rng=rng,
                L=cfg.L,
                M=cfg.M,
                model=cfg.model,
                asd_deg=cfg.asd_deg,
                cluster=replace(cluster, subcluster_size=n),
                cell_side_m=cfg.cell_side_m,
                tau_c=cfg.tau_c,
                p_dbm=cfg.p_dbm,
                noise_dbm=cfg.noise_dbm,
            )

        gammas, scen = run_monte_carlo(
            factory,
            pairs,
            trials=trials,
            seed=cfg.seed,
            n_drops=cfg.drops,
            workers=cfg.workers,
        )
        for pair in pairs:
            rec = aggregate(gammas[pair], scen, *pair, seed=cfg.seed)
            records.append(_row(cfg, "cluster-sweep", rec, "K", k))
        _progress(
            f"cluster-sweep [{cfg.model}] K={k} N={n} done ({time.time() - t0:.1f}s)"
        )
    return records


COMMANDS = {
    "angle-sweep": cmd_angle_sweep,
    "variance-sweep": cmd_variance_sweep,
    "cluster-sweep": cmd_cluster_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sim",
        description="Uplink SE simulator for code-domain NOMA in Massive MIMO",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--output", required=True, help="output CSV path")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.trials is not None:
            cfg.trials = args.trials
        if args.workers is not None:
            cfg.workers = args.workers
        records = COMMANDS[args.command](cfg)
        write_csv(records, args.output)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _progress(f"wrote {len(records)} rows to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
