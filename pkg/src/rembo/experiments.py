"""Experiment suites: configuration files, orchestration and result files.

A suite is described by an INI file. The ``[suite]`` section holds global
settings and every other section is one cell::

    [suite]
    replicates = 25
    base_seed = 0
    trace_x = off

    [branin-gamma-psi]
    objective = branin
    D = 25
    budget = 100
    method = rembo          ; rembo | random
    mapping = gamma         ; gamma | phi
    kernel = projected      ; identity | mapped | projected
    family = matern52       ; matern52 | se

Optional cell keys: ``d`` (defaults to the objective's effective
dimension), ``n0``, ``restarts``, ``pool_size``, ``acq_rounds``,
``refit_every``, ``row_mode``, ``box_half_width``.

Replicate ``r`` of every cell uses seed ``base_seed + r``; objective instances
and embeddings depend only on that seed and the dimensions, so all cells of a
suite compare methods on identical problems.

A run directory holds ``suite.ini`` (a copy of the configuration),
``summary.csv`` and one sub-directory per cell with, for each replicate,
``rep_NNN.csv`` (trace), ``rep_NNN.timing.csv`` (cumulative wall-clock),
``rep_NNN.meta.json`` and, for embedding methods, ``rep_NNN.embedding.txt``.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .benchmarks import REGISTRY, make_objective
from .bo import RunConfig, embedding_for, random_search_run, rembo_run
from .embedding import embedding_to_text
from .errors import ConfigError, RegistryError
from .gp import FAMILIES, WARPS, KernelSpec

log = logging.getLogger(__name__)

METHODS = ("rembo", "random")
GAP_FLOOR = 1e-12

_CELL_INT_KEYS = ("D", "d", "budget", "n0", "restarts", "pool_size", "acq_rounds", "refit_every")
_CELL_KEYS = set(_CELL_INT_KEYS) | {"objective", "method", "mapping", "kernel", "family",
                                    "row_mode", "box_half_width"}
_SUITE_KEYS = {"replicates", "base_seed", "trace_x"}


@dataclass(frozen=True)
class CellSpec:
    """One (objective, dimension, budget, method, kernel) combination."""

    cell_id: str
    objective: str
    D: int
    d: int
    budget: int
    method: str = "rembo"
    mapping: str = "gamma"
    kernel: str = "projected"
    family: str = "matern52"
    n0: int | None = None
    restarts: int | None = None
    pool_size: int | None = None
    acq_rounds: int = 30
    refit_every: int = 5
    row_mode: str = "gaussian"
    box_half_width: float | None = None

    def run_config(self, seed: int) -> RunConfig:
        return RunConfig(
            d=self.d, D=self.D, budget=self.budget, n0=self.n0, mapping=self.mapping,
            kernel=KernelSpec(family=self.family, warp=self.kernel), seed=seed,
            restarts=self.restarts, pool_size=self.pool_size, acq_rounds=self.acq_rounds,
            refit_every=self.refit_every, box_half_width=self.box_half_width,
            row_mode=self.row_mode)


@dataclass(frozen=True)
class ExperimentSuite:
    cells: tuple
    replicates: int = 25
    base_seed: int = 0
    trace_x: bool = False

    def seeds(self):
        return [self.base_seed + r for r in range(self.replicates)]


def normalize_key(key: str) -> str:
    """Keys are case-insensitive except ``D`` and ``d``, which differ."""
    key = key.strip()
    return key if key in ("D", "d") else key.lower()


def _key_lines(text):
    """Line number of every (section, key) in an INI text, 1-based."""
    lines = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[(section, normalize_key(m.group(1)))] = no
    return lines


def _parse_bool(value):
    v = value.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {value!r}")


def parse_suite(text: str, source: str = "<config>") -> ExperimentSuite:
    """Parse a suite configuration.

    Raises
    ------
    ConfigError
        With the file, line, section and key of the first offending field.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = normalize_key
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _key_lines(text)

    def fail(section, key, msg):
        no = lines.get((section, key), lines.get((section, None), "?"))
        field = f"[{section}]" + (f" {key}" if key else "")
        raise ConfigError(f"{source}:{no}: {field}: {msg}")

    replicates, base_seed, trace_x = 25, 0, False
    if parser.has_section("suite"):
        sec = parser["suite"]
        for key in sec:
            if key not in _SUITE_KEYS:
                fail("suite", key, f"unknown key (allowed: {sorted(_SUITE_KEYS)})")
        try:
            replicates = sec.getint("replicates", 25)
        except ValueError:
            fail("suite", "replicates", "expected an integer")
        try:
            base_seed = sec.getint("base_seed", 0)
        except ValueError:
            fail("suite", "base_seed", "expected an integer")
        if "trace_x" in sec:
            try:
                trace_x = _parse_bool(sec["trace_x"])
            except ValueError as exc:
                fail("suite", "trace_x", str(exc))
        if replicates < 1:
            fail("suite", "replicates", "must be at least 1")

    cells = []
    for name in parser.sections():
        if name == "suite":
            continue
        sec = parser[name]
        for key in sec:
            if key not in _CELL_KEYS:
                fail(name, key, f"unknown key (allowed: {sorted(_CELL_KEYS)})")
        if "objective" not in sec:
            fail(name, None, "missing key 'objective'")
        obj = sec["objective"].strip().lower()
        if obj not in REGISTRY:
            fail(name, "objective", f"unknown objective {obj!r} (known: {sorted(REGISTRY)})")
        vals = {}
        for key in _CELL_INT_KEYS:
            if key in sec:
                try:
                    vals[key] = int(sec[key])
                except ValueError:
                    fail(name, key, f"expected an integer, got {sec[key]!r}")
        for key in ("D", "budget"):
            if key not in vals:
                fail(name, None, f"missing key {key!r}")
        choices = {"method": METHODS, "mapping": ("gamma", "phi"), "kernel": WARPS,
                   "family": FAMILIES, "row_mode": ("gaussian", "sphere")}
        for key, allowed in choices.items():
            if key in sec:
                v = sec[key].strip().lower()
                if v not in allowed:
                    fail(name, key, f"expected one of {list(allowed)}, got {v!r}")
                vals[key] = v
        if "box_half_width" in sec:
            try:
                vals["box_half_width"] = float(sec["box_half_width"])
            except ValueError:
                fail(name, "box_half_width", "expected a number")
        spec = REGISTRY[obj]
        vals.setdefault("d", spec.d_e)
        if not 1 <= vals["d"] <= vals["D"]:
            fail(name, "d", f"need 1 <= d <= D, got d={vals['d']}, D={vals['D']}")
        if vals["D"] < spec.d_e:
            fail(name, "d", f"objective {obj} needs D >= {spec.d_e}")
        try:
            cell = CellSpec(cell_id=name, objective=obj, **vals)
            cell.run_config(0)
        except (ValueError, TypeError) as exc:
            fail(name, None, str(exc))
        cells.append(cell)
    if not cells:
        raise ConfigError(f"{source}: no cell sections")
    return ExperimentSuite(tuple(cells), replicates, base_seed, trace_x)


def load_suite(path) -> ExperimentSuite:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_suite(text, source=str(path))


def _fmt(v) -> str:
    return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.17g}"


def trace_to_csv(rec, f_min: float, trace_x: bool) -> str:
    """Serialize a run record; identical runs give identical text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    n = len(rec)
    d = 0 if rec.y is None else rec.y.shape[1]
    D = rec.x.shape[1] if n else 0
    header = ["iteration"] + [f"y{i + 1}" for i in range(d)]
    if trace_x:
        header += [f"x{i + 1}" for i in range(D)]
    header += ["f", "best_f", "gap", "loglik", "hyper"]
    w.writerow(header)
    for i in range(n):
        row = [str(i + 1)]
        if d:
            row += [_fmt(v) for v in rec.y[i]]
        if trace_x:
            row += [_fmt(v) for v in rec.x[i]]
        row += [_fmt(rec.f[i]), _fmt(rec.best_f[i]), _fmt(rec.best_f[i] - f_min),
                _fmt(float(rec.loglik[i])), rec.hyper[i]]
        w.writerow(row)
    return buf.getvalue()


def read_trace(path) -> dict:
    """Read a trace file into column arrays (``hyper`` stays as strings)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in body]
        out[name] = col if name == "hyper" else np.array([float(v) for v in col])
    return out


def run_replicate(cell: CellSpec, seed: int):
    """Run one replicate; returns (record, objective metadata, embedding text)."""
    objective = make_objective(cell.objective, cell.D, seed)
    config = cell.run_config(seed)
    if cell.method == "random":
        _, rec = random_search_run(config, objective)
        emb_text = None
    else:
        emb = embedding_for(config)
        _, rec = rembo_run(config, objective, emb=emb)
        emb_text = embedding_to_text(emb)
    rec.meta["objective"] = objective.metadata()
    rec.meta["cell"] = asdict(cell)
    return rec, objective.f_min, emb_text


def _task(args):
    cell, seed = args
    try:
        return cell.cell_id, seed, run_replicate(cell, seed), None
    except Exception as exc:  # recorded per replicate, the suite goes on
        log.exception("replicate %s/%d failed", cell.cell_id, seed)
        return cell.cell_id, seed, None, f"{type(exc).__name__}: {exc}"


def write_replicate(out: Path, cell: CellSpec, rep: int, result, trace_x: bool):
    rec, f_min, emb_text = result
    cdir = out / cell.cell_id
    cdir.mkdir(parents=True, exist_ok=True)
    stem = f"rep_{rep:03d}"
    (cdir / f"{stem}.csv").write_text(trace_to_csv(rec, f_min, trace_x))
    timing = "iteration,wall_seconds\n" + "".join(
        f"{i + 1},{t:.6f}\n" for i, t in enumerate(rec.wall))
    (cdir / f"{stem}.timing.csv").write_text(timing)
    meta = dict(rec.meta, status=rec.status, message=rec.message, evaluations=len(rec))
    (cdir / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    if emb_text is not None:
        (cdir / f"{stem}.embedding.txt").write_text(emb_text)


def run_suite(suite: ExperimentSuite, out, config_text: str | None = None, jobs: int = 1,
              trace_x: bool | None = None, cells=None, seeds=None) -> dict:
    """Run every (cell, replicate) pair and write the run directory.

    Failures are recorded in ``failures.json`` and do not stop the suite.
    Returns ``{cell_id: {replicate: record}}`` for the successful replicates.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trace_x = suite.trace_x if trace_x is None else trace_x
    if config_text is not None:
        (out / "suite.ini").write_text(config_text)
    cells = suite.cells if cells is None else cells
    seeds = suite.seeds() if seeds is None else seeds
    tasks = [(c, s) for c in cells for s in seeds]
    by_id = {c.cell_id: c for c in cells}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]
    records, failures = {}, []
    for cell_id, seed, res, err in results:
        rep = seed - suite.base_seed
        if err is not None:
            failures.append({"cell": cell_id, "seed": seed, "error": err})
            continue
        write_replicate(out, by_id[cell_id], rep, res, trace_x)
        records.setdefault(cell_id, {})[rep] = res[0]
    if failures:
        (out / "failures.json").write_text(json.dumps(failures, indent=2))
    write_summary(out, [c.cell_id for c in cells])
    return records


def gap_transform(gap):
    """``log10(max(gap, 0) + 1e-12)``, the plotted statistic."""
    return np.log10(np.maximum(np.asarray(gap, dtype=float), 0.0) + GAP_FLOOR)


def summarize_gaps(gaps) -> np.ndarray:
    """Median and quartiles per iteration of transformed gaps.

    ``gaps`` has shape (replicates, iterations); returns (iterations, 3) with
    columns median, q25, q75.
    """
    g = gap_transform(gaps)
    return np.stack([np.median(g, axis=0), np.quantile(g, 0.25, axis=0),
                     np.quantile(g, 0.75, axis=0)], axis=1)


def collect_gaps(run_dir, cell_id) -> np.ndarray:
    """Gap traces of a cell as an array (replicates, iterations).

    Replicates shorter than the longest (aborted runs) are padded with their
    last value.
    """
    files = sorted(Path(run_dir, cell_id).glob("rep_[0-9][0-9][0-9].csv"))
    traces = [read_trace(p)["gap"] for p in files]
    if not traces:
        return np.empty((0, 0))
    n = max(t.size for t in traces)
    return np.array([np.pad(t, (0, n - t.size), mode="edge") for t in traces])


def write_summary(run_dir, cell_ids=None) -> Path:
    """Recompute ``summary.csv`` from the trace files of a run directory."""
    run_dir = Path(run_dir)
    if cell_ids is None:
        cell_ids = sorted(p.name for p in run_dir.iterdir()
                          if p.is_dir() and any(p.glob("rep_*.csv")))
    lines = ["cell_id,iteration,median,q25,q75"]
    for cid in cell_ids:
        gaps = collect_gaps(run_dir, cid)
        if gaps.size == 0:
            continue
        stats = summarize_gaps(gaps)
        for i, (med, q25, q75) in enumerate(stats):
            lines.append(f"{cid},{i + 1},{med:.17g},{q25:.17g},{q75:.17g}")
    path = run_dir / "summary.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def replay(run_dir, seed: int, out=None, cell_ids=None) -> dict:
    """Re-run replicate ``seed`` of a stored suite and compare the traces.

    Returns ``{cell_id: True/False}`` telling whether each new trace is
    byte-identical to the stored one. New traces go to ``out`` (default
    ``run_dir/replay``).
    """
    run_dir = Path(run_dir)
    text = (run_dir / "suite.ini").read_text()
    suite = parse_suite(text, source=str(run_dir / "suite.ini"))
    out = run_dir / "replay" if out is None else Path(out)
    rep = seed - suite.base_seed
    if not 0 <= rep < suite.replicates:
        raise ConfigError(f"seed {seed} is not a replicate of this suite "
                          f"(seeds {suite.base_seed}..{suite.base_seed + suite.replicates - 1})")
    cells = [c for c in suite.cells if cell_ids is None or c.cell_id in cell_ids]
    same = {}
    for cell in cells:
        res = run_replicate(cell, seed)
        write_replicate(out, cell, rep, res, suite.trace_x)
        old = run_dir / cell.cell_id / f"rep_{rep:03d}.csv"
        new = out / cell.cell_id / f"rep_{rep:03d}.csv"
        same[cell.cell_id] = old.exists() and old.read_bytes() == new.read_bytes()
    return same
