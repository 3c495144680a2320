"""Command-line interface: ``sampdesign {sample,estimate,diagnose,experiment}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import zlib
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np

from . import _kernels
from .cps import ConvergenceError
from .cube import balance_check, _aux_matrix
from .designs import DESIGNS, DesignSpec, Sampler
from .diagnostics import monte_carlo_inclusion, spatial_balance_index
from .estimators import EstimationError, estimate_variance, nht_total
from .frame import FrameError, FrameSchema, PopulationFrame, Sample, grid_frame, load_frame
from .oracle import OracleError
from .replication import replicate_rng, run_replications
from .svg import scatter_svg, voronoi_svg

EXPERIMENT_DESIGNS = ("srs", "systematic", "stratified", "cube", "grts", "local_pivotal", "local_cube")


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


# --- frame and design arguments ---------------------------------------------

def _infer_schema(path: str) -> FrameSchema:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    if "id" not in header:
        raise ConfigError("frame has no 'id' column; pass --schema")
    coords = tuple(c for c in ("x", "y") if c in header)
    roles = {"id", "stratum", "sigma"}
    aux = tuple(c for c in header if c not in roles and c not in coords and c.startswith("aux:"))
    return FrameSchema(
        id="id", aux=aux, coords=coords,
        stratum="stratum" if "stratum" in header else None,
        sigma="sigma" if "sigma" in header else None,
    )


def _frame_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("population frame")
    g.add_argument("--frame", help="frame CSV")
    g.add_argument("--schema", help="JSON file naming the id/aux/coords/stratum/sigma columns")
    g.add_argument("--grid", type=int, help="use a side x side lattice instead of a frame file")
    g.add_argument("--block", type=int, help="lattice strata of block x block cells")


def _design_args(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_argument_group("design")
    g.add_argument("--design", choices=DESIGNS, required=required)
    g.add_argument("--n", type=int, help="sample size")
    g.add_argument("--pi", help="'equal', 'sigma', a frame column, or a probability (bernoulli)")
    g.add_argument("--aux", help="comma-separated balancing variables (cube, local_cube)")
    g.add_argument("--allocation", default="proportional",
                   help="'proportional', 'neyman' or comma-separated n_h")
    g.add_argument("--metric", choices=("euclidean", "mahalanobis"), default="euclidean")


def load_frame_from_args(args) -> PopulationFrame:
    if args.grid is not None:
        aux = "coords_and_one"
        return grid_frame(args.grid, aux, block=args.block)
    if not args.frame:
        raise ConfigError("give --frame or --grid")
    if args.schema:
        with open(args.schema, encoding="utf-8") as fh:
            schema = FrameSchema.from_json(fh.read())
    else:
        schema = _infer_schema(args.frame)
    return load_frame(args.frame, schema)


def spec_from_args(args, frame: PopulationFrame) -> DesignSpec:
    pi = args.pi
    if pi is not None and pi not in ("equal", "sigma"):
        try:
            pi = float(pi)
        except ValueError:
            pi = tuple(frame.column(pi))
    alloc = args.allocation
    if alloc not in ("proportional", "neyman"):
        try:
            alloc = tuple(int(v) for v in alloc.split(","))
        except ValueError:
            raise ConfigError(f"bad --allocation {alloc!r}") from None
    return DesignSpec(args.design, n=args.n, pi=pi, allocation=alloc, aux=args.aux, metric=args.metric)


def _out_path(args, name):
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, name)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())


# --- sample ------------------------------------------------------------------

def cmd_sample(args) -> int:
    frame = load_frame_from_args(args)
    sampler = Sampler(spec_from_args(args, frame), frame)
    sample, report = sampler.draw(np.random.default_rng(np.random.SeedSequence(args.seed)))
    if report is None and args.aux and args.design not in ("cube", "local_cube"):
        x, names = _aux_matrix(frame, sampler.pi, args.aux)
        report = balance_check(sample, sampler.pi, x, names=names)
    rows = [[frame.unit_ids[k], k, repr(float(sampler.pi[k]))] for k in sample.indices]
    dest = "-" if args.out == "-" else _out_path(args, args.out)
    _write_csv(dest, ["unit_id", "index", "pi"], rows)
    if report is not None:
        brow = [[name, repr(t), repr(e), repr(d)] for name, t, e, d in report.rows()]
        _write_csv(_out_path(args, "balance.csv"), ["variable", "total", "estimate", "relative_deviation"], brow)
    print(f"selected {sample.size} of {frame.N} units", file=sys.stderr)
    return 0


# --- estimate ------------------------------------------------------------------

def read_sample(path: str, frame: PopulationFrame):
    pos = {u: k for k, u in enumerate(frame.unit_ids)}
    idx, pis = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            uid = row.get("unit_id")
            if uid not in pos:
                raise ConfigError(f"sample unit {uid!r} is not in the frame")
            idx.append(pos[uid])
            pis.append(float(row["pi"]) if row.get("pi") not in (None, "") else np.nan)
    return Sample.from_indices(idx, frame.N), np.array(idx, dtype=np.int64), np.array(pis)


def cmd_estimate(args) -> int:
    frame = load_frame_from_args(args)
    sample, idx, spi = read_sample(args.sample, frame)
    y = frame.column(args.y)
    joint = None
    fixed = False
    design = None
    if args.design:
        sampler = Sampler(spec_from_args(args, frame), frame)
        pi = np.array(sampler.pi)
        joint = sampler.joint_inclusion()
        fixed = sampler.fixed_size
        design = args.design
    else:
        if np.isnan(spi).any():
            raise ConfigError("sample file lacks pi values; pass --design")
        pi = np.ones(frame.N)
        pi[idx] = spi
    if np.any(pi[idx] == 0):
        raise NumericalError("sampled unit with zero inclusion probability (coverage violation)")
    total = nht_total(sample, y, pi)
    report = {"estimate": total, "sample_size": sample.size, "design": design}
    want = args.variance
    if want == "auto":
        want = "syg" if fixed else "ht"
    if args.variance != "none":
        if sample.size == frame.N and np.all(pi == 1):
            report.update(variance=0.0, variance_method=want)
        elif joint is None:
            why = ("no design given" if design is None
                   else f"design {design!r} has no closed-form joint inclusion probabilities")
            msg = f"variance estimation needs joint inclusion probabilities: {why}"
            if args.variance != "auto":
                raise ConfigError(msg)
            report.update(variance=None, variance_note=msg)
            print(msg, file=sys.stderr)
        else:
            if want == "syg" and not fixed:
                raise ConfigError("the Sen-Yates-Grundy estimator requires a fixed-size design")
            report.update(variance=estimate_variance(sample, y, pi, joint, fixed_size=(want == "syg")),
                          variance_method=want)
    print(f"total_estimate: {report['estimate']!r}")
    if report.get("variance") is not None:
        print(f"variance_estimate: {report['variance']!r}")
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out_dir:
        with open(_out_path(args, "estimate.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)
    return 0


# --- diagnose -------------------------------------------------------------------

def cmd_diagnose(args) -> int:
    frame = load_frame_from_args(args)
    out = {}
    if args.sample:
        sample, idx, spi = read_sample(args.sample, frame)
        if args.design:
            pi = np.array(Sampler(spec_from_args(args, frame), frame).pi)
        else:
            if np.isnan(spi).any():
                raise ConfigError("sample file lacks pi values; pass --design")
            if args.pi is None:
                print("note: pi of non-sampled units unknown; pass --pi or --design", file=sys.stderr)
            pi = np.zeros(frame.N)
            pi[idx] = spi
            if args.pi is not None:
                pi = np.full(frame.N, float(args.pi)) if _isfloat(args.pi) else np.array(frame.column(args.pi))
        out["sample_size"] = sample.size
        if frame.coords is not None and frame.d > 0:
            res = spatial_balance_index(frame, sample, pi, ties=args.ties)
            out["spatial_balance_index"] = res.index
        if args.aux:
            x, names = _aux_matrix(frame, pi, args.aux)
            rep = balance_check(sample, pi, x, names=names)
            out["balance"] = {name: d for name, _, _, d in rep.rows()}
    elif args.design:
        sampler = Sampler(spec_from_args(args, frame), frame)
        chk = monte_carlo_inclusion(sampler, None, args.replications, args.seed, workers=args.workers)
        out.update(replications=chk.R, max_studentized_deviation=chk.max_z,
                   pi_hat=[float(v) for v in chk.pi_hat])
    else:
        raise ConfigError("give --sample or --design")
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _isfloat(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


# --- experiment --------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    side: int = 40
    n: int = 50
    replications: int = 1000
    designs: Sequence[str] = EXPERIMENT_DESIGNS
    master_seed: int = 20170101
    workers: int = 1
    block: int = 8
    ties: str = "smallest"

    def __post_init__(self):
        self.designs = tuple(self.designs)
        bad = [d for d in self.designs if d not in EXPERIMENT_DESIGNS]
        if bad:
            raise ConfigError(f"unknown experiment designs {bad}; choose from {list(EXPERIMENT_DESIGNS)}")
        if not self.designs:
            raise ConfigError("no designs selected")
        if self.side < 1 or not 1 <= self.n <= self.side ** 2:
            raise ConfigError("need side >= 1 and 1 <= n <= side^2")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if "stratified" in self.designs and self.side % self.block:
            raise ConfigError("block must divide side for the stratified design")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def experiment_sampler(name: str, cfg: ExperimentConfig) -> Sampler:
    if name == "stratified":
        frame = grid_frame(cfg.side, "coords_and_one", block=cfg.block)
        return Sampler(DesignSpec("stratified", n=cfg.n), frame)
    frame = grid_frame(cfg.side, "coords_and_one")
    if name in ("cube", "local_cube"):
        return Sampler(DesignSpec(name, n=cfg.n, aux=("one", "x", "y")), frame)
    return Sampler(DesignSpec(name, n=cfg.n), frame)


def design_seed(master_seed: int, name: str) -> int:
    """Per-design master seed, so adding a design leaves the others unchanged."""
    ss = np.random.SeedSequence([int(master_seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class BalanceIndexJob:
    """Picklable replicate: draw a sample and return its balance index."""

    def __init__(self, sampler: Sampler, ties: str = "smallest"):
        self.sampler = sampler
        self.ties = ties

    def __call__(self, rng) -> float:
        s = self.sampler(rng)
        return spatial_balance_index(self.sampler.frame, s, self.sampler.pi, self.ties).index


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None, figures: bool = True):
    """Mean and sd of the spatial-balance index for each design.

    Returns rows ``(design, mean, sd or None, R)``; with ``out_dir`` writes
    ``balance_table.csv`` and per-design SVG figures.
    """
    rows = []
    for name in cfg.designs:
        sampler = experiment_sampler(name, cfg)
        seed = design_seed(cfg.master_seed, name)
        vals = np.array(run_replications(BalanceIndexJob(sampler, cfg.ties), cfg.replications, seed, cfg.workers))
        sd = float(vals.std(ddof=1)) if vals.size > 1 else None
        rows.append((name, float(vals.mean()), sd, int(vals.size)))
        if out_dir and figures:
            s = sampler(replicate_rng(seed, 0))
            f = sampler.frame
            res = spatial_balance_index(f, s, sampler.pi, cfg.ties)
            cell = _kernels.impl.nearest_assign(np.ascontiguousarray(f.coords), s.indices)
            with open(os.path.join(out_dir, f"sample_{name}.svg"), "w", encoding="utf-8") as fh:
                fh.write(scatter_svg(f.coords, s.indicator, title=f"{name} (n = {s.size})"))
            with open(os.path.join(out_dir, f"voronoi_{name}.svg"), "w", encoding="utf-8") as fh:
                fh.write(voronoi_svg(f.coords, s.indicator, cell, res.v,
                                     title=f"{name}: balance index {res.index:.3f}"))
    if out_dir:
        _write_csv(os.path.join(out_dir, "balance_table.csv"),
                   ["design", "mean_index", "sd_index", "replications"],
                   [[d, _fmt(m), "" if s is None else _fmt(s), r] for d, m, s, r in rows])
    return rows


def cmd_experiment(args) -> int:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            try:
                cfg = ExperimentConfig.from_json(fh.read())
            except (TypeError, json.JSONDecodeError) as exc:
                raise ConfigError(f"bad config: {exc}") from None
    else:
        cfg = ExperimentConfig()
    overrides = {k: getattr(args, k) for k in ("side", "n", "replications", "workers", "block", "ties")
                 if getattr(args, k) is not None}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.designs:
        overrides["designs"] = tuple(d.strip() for d in args.designs.split(",") if d.strip())
    cfg = ExperimentConfig(**{**asdict(cfg), **overrides})
    os.makedirs(args.out_dir, exist_ok=True)
    rows = run_experiment(cfg, args.out_dir, figures=not args.no_figures)
    for d, m, s, r in rows:
        print(f"{d:15s} {m:.4f} {'' if s is None else f'{s:.4f}'} ({r} replications)")
    return 0


# --- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sampdesign", description="Probability sampling designs.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="draw one sample")
    _frame_args(s)
    _design_args(s)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out-dir", default=".")
    s.add_argument("--out", default="sample.csv", help="sample file name in --out-dir, or '-' for stdout")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("estimate", help="estimate a total from a sample")
    _frame_args(e)
    _design_args(e, required=False)
    e.add_argument("--sample", required=True)
    e.add_argument("--y", required=True, help="frame column to estimate")
    e.add_argument("--variance", choices=("auto", "syg", "ht", "none"), default="auto")
    e.add_argument("--out-dir")
    e.set_defaults(func=cmd_estimate)

    d = sub.add_parser("diagnose", help="spatial balance of a sample, or Monte Carlo inclusion check")
    _frame_args(d)
    _design_args(d, required=False)
    d.add_argument("--sample")
    d.add_argument("--replications", type=int, default=10000)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--workers", type=int, default=1)
    d.add_argument("--ties", choices=("smallest", "split"), default="smallest")
    d.set_defaults(func=cmd_diagnose)

    x = sub.add_parser("experiment", help="spatial-balance experiment on a square grid")
    x.add_argument("--config", help="JSON experiment configuration")
    x.add_argument("--side", type=int)
    x.add_argument("--n", type=int)
    x.add_argument("--replications", type=int)
    x.add_argument("--designs", help=f"comma-separated subset of {','.join(EXPERIMENT_DESIGNS)}")
    x.add_argument("--seed", type=int)
    x.add_argument("--workers", type=int)
    x.add_argument("--block", type=int)
    x.add_argument("--ties", choices=("smallest", "split"))
    x.add_argument("--no-figures", action="store_true")
    x.add_argument("--out-dir", default="experiment_out")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FrameError, OracleError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, EstimationError, ConvergenceError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
