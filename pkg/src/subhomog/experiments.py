"""Experiment sweeps: ideal, localized, decay and weighted recovery studies.

Every sweep writes one CSV (fixed column order, floats via repr) plus a JSON
run manifest that is enough to rebuild the CSV byte for byte.
"""
from __future__ import annotations

import configparser
import csv
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import decay_profile, error_report, galerkin_solve, recover
from .basis import ideal_basis, localized_basis
from .fem import Factorization, assemble_load, assemble_mass, assemble_stiffness, solve_dirichlet
from .fields import (RandomSource, coeff_multiscale_2d, coeff_random_trig_1d, constant_coefficient,
                     sample_rhs_fractional, weight_log_singular, weight_power)
from .grid import (AlignmentError, build_coarse_partition, build_fine_grid, build_measurement_set,
                   measure)

log = logging.getLogger(__name__)

KINDS = ("ideal-sweep", "localized-sweep", "decay", "weighted-sweep")
COEFFICIENTS = ("auto", "random-trig", "multiscale", "unit", "weight-log", "weight-power")

BASE_COLUMNS = ["d", "levels", "H", "h", "ratio", "l", "variant", "e1", "e0", "seed", "replicate"]
COLUMNS = {
    "ideal-sweep": BASE_COLUMNS,
    "localized-sweep": BASE_COLUMNS + ["e1_galerkin", "e0_galerkin"],
    "weighted-sweep": BASE_COLUMNS + ["gamma"],
    "decay": ["d", "levels", "H", "h", "ratio", "cell", "k", "tail", "total", "fitted_ratio"],
}


@dataclass
class ExperimentConfig:
    kind: str
    d: int = 1
    levels: int = 10
    coarse_exponents: list = field(default_factory=lambda: [2, 3, 4, 5, 6])
    ratios: list = field(default_factory=lambda: [Fraction(1)])
    subsample_exponents: list = field(default_factory=list)
    layers: list = field(default_factory=list)
    coefficient: str = "auto"
    seed: int = 0
    replicates: int = 1
    gamma: float = 1.0
    delta: float = 0.01
    cells: list = field(default_factory=list)
    threads: int = 1
    output: str = "out"

    def __post_init__(self):
        self.ratios = [Fraction(r) for r in self.ratios]

    def validate(self) -> None:
        """Reject bad settings and misaligned (H, h) pairs before any solve."""
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.coefficient not in COEFFICIENTS:
            raise ValueError(f"unknown coefficient {self.coefficient!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.kind == "localized-sweep" and not self.layers:
            raise ValueError("localized-sweep needs at least one layer")
        if self.kind == "weighted-sweep" and self.d < 2:
            raise ValueError("weighted-sweep needs d >= 2")
        grid = build_fine_grid(self.d, self.levels)
        for Hexp, h in self.points():
            try:
                build_measurement_set(build_coarse_partition(grid, Fraction(1, 2 ** Hexp)), h)
            except AlignmentError as exc:
                raise AlignmentError(f"H = 2^-{Hexp}, h = {h}: {exc}") from None

    def points(self) -> list:
        """(coarse exponent, subsampled length) pairs in output order."""
        out = []
        for Hexp in self.coarse_exponents:
            H = Fraction(1, 2 ** Hexp)
            if self.subsample_exponents:
                out += [(Hexp, Fraction(1, 2 ** k)) for k in self.subsample_exponents]
            else:
                out += [(Hexp, r * H) for r in self.ratios]
        return out

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ratios"] = [str(r) for r in self.ratios]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


_DESK = {
    ("ideal-sweep", 1): dict(levels=10, coarse_exponents=[2, 3, 4, 5, 6], ratios=["1", "1/2", "1/4", "1/8"]),
    ("ideal-sweep", 2): dict(levels=7, coarse_exponents=[2, 3, 4], ratios=["1", "3/4", "1/2", "1/4"]),
    ("localized-sweep", 1): dict(levels=10, coarse_exponents=[2, 3, 4, 5, 6], ratios=["1/2"], layers=[2]),
    ("localized-sweep", 2): dict(levels=7, coarse_exponents=[2, 3, 4], ratios=["1", "1/2"], layers=[1, 2]),
    ("decay", 2): dict(levels=7, coarse_exponents=[3], ratios=["1/2"]),
    ("decay", 1): dict(levels=10, coarse_exponents=[4], ratios=["1/2"]),
    ("weighted-sweep", 2): dict(levels=7, coarse_exponents=[2], subsample_exponents=[3, 4, 5, 6], gamma=1.0),
}
_PAPER = {
    ("ideal-sweep", 1): dict(levels=11, coarse_exponents=[2, 3, 4, 5, 6, 7], ratios=["1", "1/2", "1/4", "1/8"]),
    # H = 2^-6 with ratios 3/4, 1/4 does not align with a 2^-8 grid
    ("ideal-sweep", 2): dict(levels=8, coarse_exponents=[2, 3, 4, 5], ratios=["1", "3/4", "1/2", "1/4"]),
    ("localized-sweep", 1): dict(levels=11, coarse_exponents=[2, 3, 4, 5, 6, 7],
                                 ratios=["1", "1/2", "1/4", "1/8"], layers=[2, 4]),
    ("localized-sweep", 2): dict(levels=10, coarse_exponents=[2, 3, 4, 5, 6, 7],
                                 ratios=["1", "3/4", "1/2", "1/4"], layers=[2, 4]),
    ("decay", 2): dict(levels=8, coarse_exponents=[3], ratios=["1/2"]),
    ("decay", 1): dict(levels=11, coarse_exponents=[4], ratios=["1/2"]),
    ("weighted-sweep", 2): dict(levels=8, coarse_exponents=[2], subsample_exponents=[3, 4, 5, 6, 7], gamma=1.0),
}
PRESETS = {"desk": _DESK, "paper": _PAPER}


def preset(kind: str, d: int, name: str = "desk") -> ExperimentConfig:
    try:
        values = PRESETS[name][(kind, d)]
    except KeyError:
        raise ValueError(f"no {name!r} preset for {kind} in d={d}") from None
    return ExperimentConfig(kind=kind, d=d, **values)


_INT_LISTS = ("coarse_exponents", "subsample_exponents", "layers", "cells")


def parse_config_text(text: str) -> dict:
    """Parse an [experiment] section of flat key = value pairs; lists are space separated."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.read_string(text)
    if not cp.has_section("experiment"):
        raise ValueError("config needs an [experiment] section")
    out = {}
    for key, raw in cp.items("experiment"):
        if key in _INT_LISTS:
            out[key] = [int(x) for x in raw.replace(",", " ").split()]
        elif key == "ratios":
            out[key] = [Fraction(x) for x in raw.replace(",", " ").split()]
        elif key in ("d", "levels", "seed", "replicates", "threads"):
            out[key] = int(raw)
        elif key in ("gamma", "delta"):
            out[key] = float(raw)
        else:
            out[key] = raw.strip()
    return out


def load_config(path) -> dict:
    """Config overrides from an INI-style file or from a run manifest (.json)."""
    path = Path(path)
    if path.suffix == ".json":
        return dict(json.loads(path.read_text())["config"])
    return parse_config_text(path.read_text())


@dataclass
class RunManifest:
    config: dict
    version: str
    timings: dict
    seeds: dict
    outputs: list

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


@dataclass
class SweepResult:
    kind: str
    rows: list
    timings: dict

    @property
    def columns(self) -> list:
        return COLUMNS[self.kind]


class _Stopwatch:
    def __init__(self):
        self.timings = {}

    def __call__(self, stage: str, t0: float) -> None:
        self.timings[stage] = self.timings.get(stage, 0.0) + time.perf_counter() - t0


class _FactorCache:
    # SuperLU handles are not shared across threads
    def __init__(self, matrix):
        self.matrix = matrix
        self._local = threading.local()

    def get(self) -> Factorization:
        f = getattr(self._local, "f", None)
        if f is None:
            f = self._local.f = Factorization(self.matrix)
        return f


def make_coefficient(cfg: ExperimentConfig, grid, partition=None):
    kind = cfg.coefficient
    if kind == "auto":
        kind = {1: "random-trig", 2: "multiscale"}.get(cfg.d, "unit")
    if kind == "random-trig":
        return coeff_random_trig_1d(RandomSource(cfg.seed, 0), grid)
    if kind == "multiscale":
        return coeff_multiscale_2d(grid)
    if kind == "unit":
        return constant_coefficient(grid)
    if partition is None:
        raise ValueError(f"coefficient {kind!r} needs a coarse partition")
    if kind == "weight-log":
        return weight_log_singular(partition)
    return weight_power(partition, cfg.gamma)


def _rhs(cfg: ExperimentConfig, grid, M) -> tuple:
    fs = [sample_rhs_fractional(RandomSource(cfg.seed, r + 1), grid, cfg.delta) for r in range(cfg.replicates)]
    return np.column_stack([assemble_load(grid, f, M) for f in fs])


def _map(cfg: ExperimentConfig, fn, items) -> list:
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _row(cfg, ms, l, variant, rep, r, **extra) -> dict:
    row = dict(d=cfg.d, levels=cfg.levels, H=ms.H, h=ms.h, ratio=str(ms.ratio), l=l,
               variant=variant, e1=rep.energy_error, e0=rep.l2_error, seed=cfg.seed, replicate=r)
    row.update(extra)
    return row


def _setup(cfg: ExperimentConfig, watch: _Stopwatch):
    t0 = time.perf_counter()
    grid = build_fine_grid(cfg.d, cfg.levels)
    a = make_coefficient(cfg, grid)
    A = assemble_stiffness(grid, a)
    M = assemble_mass(grid)
    loads = _rhs(cfg, grid, M)
    watch("assembly", t0)
    t0 = time.perf_counter()
    cache = _FactorCache(A.matrix)
    U = grid.extend(cache.get().solve(loads))
    watch("fine_solve", t0)
    return grid, A, M, cache, loads, U


def _coarse(grid, Hexp, h):
    return build_measurement_set(build_coarse_partition(grid, Fraction(1, 2 ** Hexp)), h)


def run_ideal_sweep(cfg: ExperimentConfig) -> SweepResult:
    cfg.validate()
    watch = _Stopwatch()
    grid, A, M, cache, loads, U = _setup(cfg, watch)

    def point(p):
        ms = _coarse(grid, *p)
        basis = ideal_basis(A, ms, cache.get())
        rec = recover(basis, measure(U, ms))
        return [_row(cfg, ms, "inf", "ideal", error_report(U[:, r], rec[:, r], A, M), r)
                for r in range(cfg.replicates)]

    t0 = time.perf_counter()
    rows = sum(_map(cfg, point, cfg.points()), [])
    watch("sweep", t0)
    return SweepResult(cfg.kind, rows, watch.timings)


def run_localized_sweep(cfg: ExperimentConfig) -> SweepResult:
    cfg.validate()
    watch = _Stopwatch()
    grid, A, M, cache, loads, U = _setup(cfg, watch)

    def point(p):
        Hexp, h, l = p
        ms = _coarse(grid, Hexp, h)
        basis = localized_basis(A, ms, l)
        rec = recover(basis, measure(U, ms))
        gal = galerkin_solve(basis, A, loads)
        rows = []
        for r in range(cfg.replicates):
            g = error_report(U[:, r], gal[:, r], A, M)
            rows.append(_row(cfg, ms, l, "localized", error_report(U[:, r], rec[:, r], A, M), r,
                             e1_galerkin=g.energy_error, e0_galerkin=g.l2_error))
        return rows

    t0 = time.perf_counter()
    items = [(Hexp, h, l) for Hexp, h in cfg.points() for l in cfg.layers]
    rows = sum(_map(cfg, point, items), [])
    watch("sweep", t0)
    return SweepResult(cfg.kind, rows, watch.timings)


def run_decay(cfg: ExperimentConfig) -> SweepResult:
    cfg.validate()
    watch = _Stopwatch()
    t0 = time.perf_counter()
    grid = build_fine_grid(cfg.d, cfg.levels)
    A = assemble_stiffness(grid, make_coefficient(cfg, grid))
    cache = _FactorCache(A.matrix)
    watch("assembly", t0)

    def point(p):
        ms = _coarse(grid, *p)
        basis = ideal_basis(A, ms, cache.get())
        cells = cfg.cells or [ms.partition.center_cell()]
        rows = []
        for i in cells:
            prof = decay_profile(basis, i, A)
            ratio = prof.fit()[1]
            for k, tail in enumerate(prof.tails):
                rows.append(dict(d=cfg.d, levels=cfg.levels, H=ms.H, h=ms.h, ratio=str(ms.ratio), cell=i,
                                 k=k, tail=tail, total=prof.total, fitted_ratio=ratio))
        return rows

    t0 = time.perf_counter()
    rows = sum(_map(cfg, point, cfg.points()), [])
    watch("sweep", t0)
    return SweepResult(cfg.kind, rows, watch.timings)


def run_weighted_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Truth solves the weighted problem; recover it with unit and with weighted coefficients."""
    cfg.validate()
    if cfg.coefficient not in ("auto", "weight-power", "weight-log"):
        raise ValueError("weighted-sweep uses a weight-power or weight-log coefficient")
    watch = _Stopwatch()
    grid = build_fine_grid(cfg.d, cfg.levels)
    M = assemble_mass(grid)
    A1 = assemble_stiffness(grid, constant_coefficient(grid))
    unit = _FactorCache(A1.matrix)
    wcfg = ExperimentConfig(**{**cfg.to_dict(), "coefficient": cfg.coefficient if cfg.coefficient != "auto"
                               else "weight-power"})
    loads = _rhs(cfg, grid, M)
    rows = []
    for Hexp in cfg.coarse_exponents:
        t0 = time.perf_counter()
        partition = build_coarse_partition(grid, Fraction(1, 2 ** Hexp))
        AW = assemble_stiffness(grid, make_coefficient(wcfg, grid, partition))
        weighted = _FactorCache(AW.matrix)
        watch("assembly", t0)
        t0 = time.perf_counter()
        U = grid.extend(weighted.get().solve(loads))
        watch("fine_solve", t0)

        def point(p):
            ms = _coarse(grid, *p)
            data = measure(U, ms)
            out = []
            recs = [(name, recover(ideal_basis(op, ms, cache.get()), data))
                    for name, op, cache in (("unit", A1, unit), ("weighted", AW, weighted))]
            for r in range(cfg.replicates):
                for name, rec in recs:
                    rep = error_report(U[:, r], rec[:, r], A1, M)
                    out.append(_row(cfg, ms, "inf", name, rep, r, gamma=cfg.gamma))
            return out

        t0 = time.perf_counter()
        rows += sum(_map(cfg, point, [p for p in cfg.points() if p[0] == Hexp]), [])
        watch("sweep", t0)
    return SweepResult(cfg.kind, rows, watch.timings)


RUNNERS = {
    "ideal-sweep": run_ideal_sweep,
    "localized-sweep": run_localized_sweep,
    "decay": run_decay,
    "weighted-sweep": run_weighted_sweep,
}


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(result.columns)
        for row in result.rows:
            w.writerow([_fmt(row[c]) for c in result.columns])


def table_kind(columns) -> str:
    for kind, cols in COLUMNS.items():
        if list(columns) == cols:
            return kind
    raise ValueError(f"unrecognized CSV header {list(columns)}")


_INT_FIELDS = ("d", "levels", "seed", "replicate", "cell", "k")
_FLOAT_FIELDS = ("H", "h", "e1", "e0", "e1_galerkin", "e0_galerkin", "gamma", "tail", "total", "fitted_ratio")


def read_table(path) -> tuple:
    """Read a sweep CSV, re-checking every row against the grid alignment rules."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty CSV")
        kind = table_kind(reader.fieldnames)
        rows = []
        for n, raw in enumerate(reader, start=2):
            row = dict(raw)
            for key in _INT_FIELDS:
                if key in row:
                    row[key] = int(row[key])
            for key in _FLOAT_FIELDS:
                if key in row:
                    row[key] = float(row[key])
            row["ratio"] = Fraction(row["ratio"])
            try:
                grid = build_fine_grid(row["d"], row["levels"])
                ms = build_measurement_set(build_coarse_partition(grid, row["H"]), row["h"])
            except AlignmentError as exc:
                raise ValueError(f"{path}:{n}: {exc}") from None
            if ms.ratio != row["ratio"]:
                raise ValueError(f"{path}:{n}: ratio {row['ratio']} does not match h/H = {ms.ratio}")
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return kind, rows


def execute(cfg: ExperimentConfig, out_dir=None) -> RunManifest:
    """Run a sweep, write <kind>.csv and <kind>_manifest.json into the output directory."""
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    result = RUNNERS[cfg.kind](cfg)
    stem = cfg.kind.replace("-sweep", "")
    csv_path = out / f"{stem}.csv"
    write_table(csv_path, result)
    seeds = dict(master=cfg.seed, coefficient_stream=0, rhs_streams=list(range(1, cfg.replicates + 1)))
    manifest = RunManifest(cfg.to_dict(), __version__, result.timings, seeds, [csv_path.name])
    manifest.write(out / f"{stem}_manifest.json")
    log.info("wrote %s (%d rows)", csv_path, len(result.rows))
    return manifest
