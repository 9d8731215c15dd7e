"""Command line front end.

::

    cv2xsim validate CONFIG
    cv2xsim run CONFIG [--seed N] [--out DIR] [--format csv,json]
    cv2xsim sweep CONFIG [--alpha 1 0.4] [--p-keep 0 0.2] [--policy standard greedy]
                         [--seeds 10 | --seed-list 1 2 3] [--out DIR] [--jobs 4]

Output goes to ``--out``, else ``$CV2XSIM_OUTPUT_DIR``, else ``./results``.
Exit status: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

import numpy as np

from cv2xsim.config import ConfigError, SimConfig, dump_config, parse_config
from cv2xsim.engine import run
from cv2xsim.metrics import SimulationReport, serialize, to_csv
from cv2xsim.sps import Policy

log = logging.getLogger("cv2xsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
OUTPUT_ENV = "CV2XSIM_OUTPUT_DIR"
SUMMARY_COLUMNS = ("alpha", "p_keep", "policy", "distance_m", "prr_disk_mean", "prr_disk_std",
                   "prr_ring_mean", "prr_ring_std", "seeds")


@dataclass(frozen=True)
class RunSpec:
    config_path: Path
    seeds: tuple[int, ...]
    out_dir: Path
    formats: tuple[str, ...] = ("csv",)
    alphas: tuple[float, ...] | None = None
    p_keeps: tuple[float, ...] | None = None
    policies: tuple[str, ...] | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("at least one seed is required")
        for name in ("alphas", "p_keeps", "policies"):
            v = getattr(self, name)
            if v is not None and not v:
                raise ValueError(f"sweep axis {name} is empty")


def write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _fmt(x: float) -> str:
    return f"{x:g}"


def run_name(cfg: SimConfig) -> str:
    sps = cfg.sps
    return (f"alpha={_fmt(sps.alpha)}_pkeep={_fmt(sps.p_keep)}_policy={sps.policy.value}"
            f"_seed={cfg.seed}")


def write_report(report: SimulationReport, out_dir: Path, name: str,
                 formats=("csv",)) -> list[Path]:
    paths = []
    for fmt in formats:
        path = out_dir / f"{name}.{fmt}"
        try:
            write_atomic(path, serialize(report, fmt))
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
        paths.append(path)
    return paths


def axis_points(base: SimConfig, spec: RunSpec) -> list[SimConfig]:
    alphas = spec.alphas or (base.sps.alpha,)
    p_keeps = spec.p_keeps or (base.sps.p_keep,)
    policies = spec.policies or (base.sps.policy.value,)
    points = []
    for policy, alpha, p_keep in product(policies, alphas, p_keeps):
        sps = replace(base.sps, alpha=alpha, p_keep=p_keep, policy=Policy(policy))
        points.append(replace(base, sps=sps))
    return points


def _run_one(cfg: SimConfig) -> SimulationReport:
    return run(cfg)


def summarize(points: list[SimConfig], reports: dict[tuple[int, int], SimulationReport]) -> str:
    """Mean and sample stddev of PRR (percent) across seeds, one row per point and D_x."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for p, cfg in enumerate(points):
        runs = [r for (pi, _), r in sorted(reports.items()) if pi == p]
        for D in cfg.awareness_distances:
            row = [_fmt(cfg.sps.alpha), _fmt(cfg.sps.p_keep), cfg.sps.policy.value, _fmt(D)]
            for variant in ("disk", "ring"):
                vals = np.array([r.table.prr(D, variant) for r in runs], dtype=float)
                vals = vals[~np.isnan(vals)] * 100
                mean = f"{vals.mean():.4f}" if len(vals) else ""
                std = f"{vals.std(ddof=1):.4f}" if len(vals) > 1 else ""
                row += [mean, std]
            row.append(len(runs))
            w.writerow(row)
    return buf.getvalue()


def run_sweep(spec: RunSpec) -> int:
    try:
        base = parse_config(spec.config_path)
        points = axis_points(base, spec)
    except (ConfigError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    tasks = [(p, s) for p in range(len(points)) for s in spec.seeds]
    cfgs = [points[p].with_seed(s) for p, s in tasks]
    reports: dict[tuple[int, int], SimulationReport] = {}
    failed = 0
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            futures = [pool.submit(_run_one, c) for c in cfgs]
            outcomes = []
            for fut in futures:
                try:
                    outcomes.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - reported per run
                    outcomes.append(exc)
    else:
        outcomes = []
        for c in cfgs:
            try:
                outcomes.append(_run_one(c))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(exc)
    for key, cfg, out in zip(tasks, cfgs, outcomes):
        name = run_name(cfg)
        if isinstance(out, Exception):
            failed += 1
            log.error("run %s failed: %s", name, out)
            continue
        try:
            write_report(out, spec.out_dir, name, spec.formats)
        except OSError as exc:
            failed += 1
            log.error("run %s: cannot write output: %s", name, exc)
            continue
        reports[key] = out
        log.info("run %s done", name)
    try:
        write_atomic(spec.out_dir / "summary.csv", summarize(points, reports).encode("utf-8"))
    except OSError as exc:
        log.error("cannot write summary: %s", exc)
        return EXIT_RUNTIME
    return EXIT_RUNTIME if failed else EXIT_OK


def _out_dir(arg: str | None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "results")


def _formats(text: str) -> tuple[str, ...]:
    fmts = tuple(f.strip() for f in text.split(",") if f.strip())
    bad = [f for f in fmts if f not in ("csv", "json")]
    if bad or not fmts:
        raise argparse.ArgumentTypeError(f"formats must be csv and/or json, got {text!r}")
    return fmts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cv2xsim", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a config file and print the resolved values")
    p.add_argument("config")

    p = sub.add_parser("run", help="run one simulation")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", type=_formats, default=("csv",), help="csv, json or csv,json")

    p = sub.add_parser("sweep", help="run every axis point for every seed")
    p.add_argument("config")
    p.add_argument("--alpha", type=float, nargs="+")
    p.add_argument("--p-keep", type=float, nargs="+")
    p.add_argument("--policy", nargs="+", choices=[x.value for x in Policy])
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seeds", type=int, help="number of seeds, counting up from the config seed")
    seeds.add_argument("--seed-list", type=int, nargs="+")
    p.add_argument("--out")
    p.add_argument("--format", type=_formats, default=("csv",))
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.command == "validate":
        try:
            cfg = parse_config(args.config)
        except ConfigError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        sys.stdout.write(dump_config(cfg))
        sys.stdout.write(f"# gamma_T = {cfg.channel.decode_threshold_db:.4f} dB\n")
        return EXIT_OK

    if args.command == "run":
        try:
            cfg = parse_config(args.config)
            if args.seed is not None:
                cfg = cfg.with_seed(args.seed)
        except (ConfigError, ValueError) as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        try:
            report = run(cfg)
            write_report(report, _out_dir(args.out), run_name(cfg), args.format)
        except Exception as exc:  # noqa: BLE001
            log.error("run failed: %s", exc)
            return EXIT_RUNTIME
        sys.stdout.write(to_csv(report))
        return EXIT_OK

    if args.seed_list:
        seeds = tuple(args.seed_list)
    else:
        try:
            base_seed = parse_config(args.config).seed
        except ConfigError as exc:
            log.error("%s", exc)
            return EXIT_CONFIG
        count = args.seeds if args.seeds is not None else 1
        seeds = tuple(range(base_seed, base_seed + max(count, 0)))
    try:
        spec = RunSpec(Path(args.config), seeds, _out_dir(args.out), args.format,
                       tuple(args.alpha) if args.alpha else None,
                       tuple(args.p_keep) if args.p_keep else None,
                       tuple(args.policy) if args.policy else None, args.jobs)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return run_sweep(spec)


if __name__ == "__main__":
    sys.exit(main())
