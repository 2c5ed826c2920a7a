"""Config-driven experiment runner.

Config files are plain text, one ``dotted.key = value`` per line; ``#`` starts
a comment.  Recognised keys::

    model.name                  registered model (``qjumpmaps list-models``)
    model.<parameter>           model parameters, passed through to the builder
    grid.t0, grid.T, grid.steps uniform grid with steps + 1 nodes
    grid.columns                ``all`` (default) or comma-separated column indices
    pipeline                    series | volterra | tcl | verify | crosscheck
    tolerances.series_tol       series truncation tolerance (1e-10)
    tolerances.lmax             maximum number of jump terms (64)
    tolerances.cp_tol           CP verdict tolerance (1e-8)
    tolerances.cond_max         largest condition number inverted (1e8)
    outputs.report_path         key-value report file
    outputs.table_path          CSV table

Reports hold ``[config]``, ``[metrics]`` and ``[checks]`` sections.  Runtimes
are printed but never written, so repeated runs give identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import InvalidConfig, NotConvergedWarning, QJumpError, SingularMapWarning, SlowDecayWarning
from .grid import OneParamFamily, TimeGrid, TwoParamFamily, homogeneity_defect, spectral_max
from .kernel_solver import new_me_residual, solve_volterra
from .models import get_model, list_models
from .series import hierarchy_residual, series
from .superop import min_choi_eigenvalue, trace_defect
from .tcl import (composition_defect, extract_tcl, integrate_tcl, propagator_t0_defect, roundtrip_defect,
                  tcl_t0_defect)

PIPELINES = ("series", "volterra", "tcl", "verify", "crosscheck")

DEFAULTS = {
    "model.name": "amplitude_damping",
    "grid.t0": "0",
    "grid.T": "1",
    "grid.steps": "256",
    "grid.columns": "all",
    "pipeline": "series",
    "tolerances.series_tol": "1e-10",
    "tolerances.lmax": "64",
    "tolerances.cp_tol": "1e-8",
    "tolerances.cond_max": "1e8",
}

SECTIONS = ("model", "grid", "tolerances", "outputs")
TOP_LEVEL = ("pipeline",)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        _check_key(key, f"{source}:{lineno}")
        out[key] = value
    return out


def _check_key(key: str, where: str):
    if key in TOP_LEVEL:
        return
    head, _, rest = key.partition(".")
    if head not in SECTIONS or not rest:
        raise InvalidConfig(f"{where}: unknown key {key!r}")


def parse_override(item: str) -> tuple:
    if "=" not in item:
        raise InvalidConfig(f"--set expects key=value, got {item!r}")
    key, value = (s.strip() for s in item.split("=", 1))
    _check_key(key, "--set")
    return key, value


def _float(raw: Dict[str, str], key: str) -> float:
    try:
        return float(raw[key])
    except ValueError:
        raise InvalidConfig(f"{key} = {raw[key]!r} is not a number") from None


def _int(raw: Dict[str, str], key: str) -> int:
    try:
        return int(raw[key])
    except ValueError:
        raise InvalidConfig(f"{key} = {raw[key]!r} is not an integer") from None


@dataclass
class ExperimentConfig:
    model: str
    params: Dict[str, str]
    t0: float
    T: float
    steps: int
    pipeline: str
    series_tol: float = 1e-10
    lmax: int = 64
    cp_tol: float = 1e-8
    cond_max: float = 1e8
    columns: Optional[List[int]] = None
    report_path: Optional[str] = None
    table_path: Optional[str] = None
    raw: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping: Dict[str, str]) -> "ExperimentConfig":
        raw = dict(DEFAULTS)
        raw.update(mapping)
        pipeline = raw["pipeline"]
        if pipeline not in PIPELINES:
            raise InvalidConfig(f"pipeline must be one of {', '.join(PIPELINES)}, got {pipeline!r}")
        t0, T, steps = _float(raw, "grid.t0"), _float(raw, "grid.T"), _int(raw, "grid.steps")
        if steps < 1:
            raise InvalidConfig(f"grid.steps must be >= 1, got {steps}")
        if not T > t0:
            raise InvalidConfig(f"grid.T ({T}) must exceed grid.t0 ({t0})")
        tol = {k: _float(raw, "tolerances." + k) for k in ("series_tol", "cp_tol", "cond_max")}
        for k, v in tol.items():
            if not v > 0:
                raise InvalidConfig(f"tolerances.{k} must be positive")
        lmax = _int(raw, "tolerances.lmax")
        if lmax < 0:
            raise InvalidConfig("tolerances.lmax must be >= 0")
        cols = None
        if raw["grid.columns"].strip().lower() != "all":
            try:
                cols = sorted({int(c) for c in raw["grid.columns"].split(",") if c.strip()})
            except ValueError:
                raise InvalidConfig(f"grid.columns = {raw['grid.columns']!r}") from None
            if not cols or cols[0] < 0 or cols[-1] > steps:
                raise InvalidConfig(f"grid.columns must lie in [0, {steps}]")
        params = {k[6:]: v for k, v in raw.items() if k.startswith("model.") and k != "model.name"}
        return cls(raw["model.name"], params, t0, T, steps, pipeline, tol["series_tol"], lmax, tol["cp_tol"],
                   tol["cond_max"], cols, raw.get("outputs.report_path"), raw.get("outputs.table_path"), raw)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, (self.T - self.t0) / self.steps, self.steps)

    @property
    def quad_budget(self) -> float:
        return 10 * self.grid.h ** 2


@dataclass
class Report:
    config: Dict[str, str]
    metrics: Dict[str, object] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    flags: Dict[str, str] = field(default_factory=dict)
    runtimes: Dict[str, float] = field(default_factory=dict)
    table: Optional[tuple] = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def check(self, name: str, ok: bool):
        self.checks[name] = bool(ok)

    def render(self) -> str:
        lines = ["# qjumpmaps report", f"version = qjumpmaps {__version__}", "", "[config]"]
        lines += [f"{k} = {self.config[k]}" for k in sorted(self.config)]
        lines += ["", "[metrics]"]
        lines += [f"{k} = {_fmt(v)}" for k, v in self.metrics.items()]
        if self.flags:
            lines += ["", "[flags]"]
            lines += [f"{k} = {v}" for k, v in self.flags.items()]
        lines += ["", "[checks]"]
        lines += [f"{k} = {'pass' if v else 'fail'}" for k, v in self.checks.items()]
        lines += ["", "[summary]", f"status = {'pass' if self.passed else 'fail'}", ""]
        return "\n".join(lines)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.10e}"


# ---- table helpers -------------------------------------------------------------

def _exact_array(desc, F):
    if desc.exact is None:
        return None
    g = F.grid
    if isinstance(F, OneParamFamily):
        return np.array([desc.exact(t, g.t0) for t in g.nodes])
    out = np.zeros_like(F.values)
    for c, j in enumerate(F.cols):
        for i in range(j, g.N):
            out[i, c] = desc.exact(g.nodes[i], g.nodes[j])
    return out


def _stored(F, arr):
    """Entries of ``arr`` (shaped like ``F.values``) at stored positions, flattened over pairs."""
    if isinstance(F, OneParamFamily):
        return arr
    return arr[F.mask()]


def _map_table(F, exact=None, dump=False, prefix=""):
    vals = _stored(F, F.values)
    td = trace_defect(vals)
    mc = min_choi_eigenvalue(vals)
    nrm = np.linalg.norm(vals, ord=2, axis=(-2, -1))
    cols = {prefix + "trace_defect": td, prefix + "min_choi_eig": mc, prefix + "norm": nrm}
    if exact is not None:
        cols[prefix + "exact_error"] = np.linalg.norm(vals - _stored(F, exact), ord=2, axis=(-2, -1))
    if dump:
        _add_dump(cols, vals, prefix)
    return cols


def _add_dump(cols, vals, prefix=""):
    D = vals.shape[-1]
    for a in range(D):
        for b in range(D):
            cols[f"{prefix}re_{a}_{b}"] = vals[:, a, b].real
            cols[f"{prefix}im_{a}_{b}"] = vals[:, a, b].imag


def _ts(F):
    """Row labels in the order of ``_stored``; ``s`` is None for one-parameter data."""
    g = F.grid
    if isinstance(F, OneParamFamily):
        return list(g.nodes), [None] * g.N
    i, c = np.nonzero(F.mask())
    return list(g.nodes[i]), list(g.nodes[F.cols[c]])


def _write_table(path: Path, t, s, cols: Dict[str, np.ndarray]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(cols)
    w.writerow(["t", "s"] + names)
    arrs = [np.asarray(cols[n]) for n in names]
    for k in range(len(t)):
        row = [f"{t[k]:.10g}", "" if s[k] is None else f"{s[k]:.10g}"]
        row += [f"{float(a[k]):.10e}" for a in arrs]
        w.writerow(row)
    _write(path, buf.getvalue())


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e


# ---- pipelines -------------------------------------------------------------------

class _Timer:
    def __init__(self, report: Report, name: str):
        self.report, self.name = report, name

    def __enter__(self):
        self.t = time.perf_counter()

    def __exit__(self, *exc):
        self.report.runtimes[self.name] = time.perf_counter() - self.t


def _series(cfg: ExperimentConfig, model, report: Report, keep_terms=True):
    with _Timer(report, "series"), warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NotConvergedWarning)
        warnings.simplefilter("always", SlowDecayWarning)
        res = series(model, cfg.series_tol, cfg.lmax, keep_terms=keep_terms, columns=cfg.columns)
    report.metrics["n_terms"] = res.n_terms
    report.metrics["truncation_norm"] = res.truncation_norm
    report.metrics["converged"] = res.converged
    if any(issubclass(w.category, SlowDecayWarning) for w in caught):
        report.flags["slow_decay"] = "yes"
    return res


def _cp_trace_metrics(cfg, F, report: Report, prefix=""):
    vals = _stored(F, F.values)
    report.metrics[prefix + "trace_defect"] = float(np.max(trace_defect(vals)))
    report.metrics[prefix + "min_choi_eig"] = float(np.min(min_choi_eigenvalue(vals)))


def _exact_metric(desc, F, report: Report, key="exact_defect"):
    ex = _exact_array(desc, F)
    if ex is None:
        report.metrics[key] = "skipped (model has no closed form)"
        return None
    report.metrics[key] = spectral_max(_stored(F, F.values - ex))
    return ex


def run_series(cfg, desc, model, report: Report, dump=False):
    res = _series(cfg, model, report)
    tot = res.total
    _cp_trace_metrics(cfg, tot, report)
    term_min = min(res.term_min_choi())
    report.metrics["min_term_choi_eig"] = term_min
    ex = _exact_metric(desc, tot, report)
    report.check("c1_truncation", res.converged and res.truncation_norm <= cfg.series_tol)
    report.check("c2_terms_cp", min(term_min, report.metrics["min_choi_eig"]) >= -cfg.cp_tol)
    report.check("c2_trace_defect", report.metrics["trace_defect"] <= max(1e-6, cfg.quad_budget))
    if ex is not None:
        report.check("c1_exact", report.metrics["exact_defect"] <= max(1e-4, cfg.quad_budget))
    t, s = _ts(tot)
    report.table = (t, s, _map_table(tot, ex, dump))
    return res


def _volterra(cfg, model, report: Report):
    with _Timer(report, "volterra"):
        sol = solve_volterra(model.kernel(), model.grid, columns=cfg.columns)
    if model.regime in ("semigroup", "homogeneous"):
        sol = OneParamFamily(sol.grid, sol.column(0))
    return sol


def run_volterra(cfg, desc, model, report: Report, dump=False):
    sol = _volterra(cfg, model, report)
    _cp_trace_metrics(cfg, sol, report)
    ex = _exact_metric(desc, sol, report)
    budget = max(1e-6, cfg.quad_budget)
    report.check("c2_trace_defect", report.metrics["trace_defect"] <= budget)
    report.check("c2_total_cp", report.metrics["min_choi_eig"] >= -max(cfg.cp_tol, cfg.quad_budget))
    if ex is not None:
        report.check("c5_exact", report.metrics["exact_defect"] <= cfg.quad_budget)
    t, s = _ts(sol)
    report.table = (t, s, _map_table(sol, ex, dump))
    return sol


def _tcl_columns(cfg):
    if cfg.columns is not None:
        return cfg.columns
    n = cfg.steps
    return sorted({0, n // 4, n // 2})


def run_tcl(cfg, desc, model, report: Report, dump=False):
    cols = _tcl_columns(cfg)
    with _Timer(report, "series"):
        res = series(model, cfg.series_tol, cfg.lmax, keep_terms=False,
                     columns=None if model.regime in ("semigroup", "homogeneous") else cols)
    fam = res.lifted_total(cols)
    report.metrics["truncation_norm"] = res.truncation_norm
    with _Timer(report, "tcl"), warnings.catch_warnings():
        warnings.simplefilter("ignore", SingularMapWarning)
        tcls = [extract_tcl(fam, j, cfg.cond_max) for j in cols]
        back = [integrate_tcl(x) for x in tcls]
        report.metrics["roundtrip_defect"] = roundtrip_defect(fam, cols[0], cfg.cond_max)
        report.metrics["tcl_t0_defect"] = tcl_t0_defect(fam, cols, cfg.cond_max)
        report.metrics["propagator_t0_defect"] = propagator_t0_defect(fam, cols, cfg.cond_max)
    worst = [float(np.nanmax(x.condition_log)) for x in tcls]
    report.metrics["max_condition"] = max(worst)
    report.metrics["skipped_nodes"] = int(sum((~x.valid[x.t0_index:]).sum() for x in tcls))
    markov = report.metrics["propagator_t0_defect"] <= cfg.quad_budget
    report.flags["non_markovian"] = "no" if markov else "yes"
    report.check("c7_roundtrip", report.metrics["roundtrip_defect"] <= cfg.quad_budget)

    t, s, cols_out = [], [], {"condition": [], "generator_norm": [], "roundtrip_error": []}
    dump_vals = []
    g = fam.grid
    for x, b in zip(tcls, back):
        j = x.t0_index
        ref = fam.column(j)
        bj = b.column(j)
        for i in range(j, g.N):
            t.append(g.nodes[i])
            s.append(g.nodes[j])
            cols_out["condition"].append(x.condition_log[i])
            cols_out["generator_norm"].append(np.linalg.norm(x.values[i], 2) if x.valid[i] else np.nan)
            err = bj[i - j] - ref[i - j]
            cols_out["roundtrip_error"].append(np.linalg.norm(err, 2) if np.isfinite(err).all() else np.nan)
            dump_vals.append(x.values[i])
    cols_out = {k: np.array(v) for k, v in cols_out.items()}
    if dump:
        _add_dump(cols_out, np.array(dump_vals), "generator_")
    report.table = (t, s, cols_out)


def run_verify(cfg, desc, model, report: Report, dump=False):
    if cfg.columns is not None:
        raise InvalidConfig("verify needs the full triangle; remove grid.columns")
    res = run_series(cfg, desc, model, report, dump)
    report.checks.pop("c1_exact", None)
    full = res.lifted_total()
    with _Timer(report, "verify"):
        report.metrics["composition_defect"] = composition_defect(full)
        report.metrics["homogeneity_defect"] = homogeneity_defect(full)
        if model.z is not None:
            report.metrics["hierarchy_residual"] = hierarchy_residual(res, model)
        else:
            report.metrics["hierarchy_residual"] = "skipped (model has no Z)"
    report.metrics["composition_budget"] = cfg.quad_budget
    non_markov = report.metrics["composition_defect"] > cfg.quad_budget
    report.flags["non_markovian"] = "yes" if non_markov else "no"
    if model.regime in ("semigroup", "inhom_semigroup"):
        report.check("c6_composition_defect", not non_markov)


def run_crosscheck(cfg, desc, model, report: Report, dump=False):
    res = _series(cfg, model, report)
    tot = res.total
    sol = _volterra(cfg, model, report)
    _cp_trace_metrics(cfg, tot, report, "series_")
    _cp_trace_metrics(cfg, sol, report, "volterra_")
    diff = _stored(tot, tot.values - sol.values)
    report.metrics["series_volterra_defect"] = spectral_max(diff)
    with _Timer(report, "new_me"):
        free = model.free
        report.metrics["new_me_residual"] = new_me_residual(tot, free, model.phi_kernel())
    report.metrics["budget"] = cfg.quad_budget
    report.check("c2_trace_defect", report.metrics["series_trace_defect"] <= max(1e-6, cfg.quad_budget))
    report.check("c5_series_volterra", report.metrics["series_volterra_defect"] <= cfg.quad_budget)
    report.check("c5_new_me_residual", report.metrics["new_me_residual"] <= cfg.quad_budget)
    t, s = _ts(tot)
    cols = _map_table(tot, None, dump, "series_")
    cols.update(_map_table(sol, None, False, "volterra_"))
    cols["disagreement"] = np.linalg.norm(diff, ord=2, axis=(-2, -1))
    report.table = (t, s, cols)


RUNNERS = {
    "series": run_series,
    "volterra": run_volterra,
    "tcl": run_tcl,
    "verify": run_verify,
    "crosscheck": run_crosscheck,
}


def run(cfg: ExperimentConfig, dump_maps: bool = False) -> Report:
    """Run the configured pipeline; writes the report and table when paths are set."""
    desc = get_model(cfg.model, cfg.params)
    grid = cfg.grid
    report = Report(config={k: v for k, v in cfg.raw.items()})
    with _Timer(report, "build"):
        model = desc.jump_model(grid)
        model.validate()
    report.metrics["h"] = grid.h
    report.metrics["regime"] = model.regime
    report.metrics["cp_waived"] = model.cp_waived
    RUNNERS[cfg.pipeline](cfg, desc, model, report, dump_maps)
    if cfg.report_path:
        _write(Path(cfg.report_path), report.render())
    if cfg.table_path and report.table is not None:
        _write_table(Path(cfg.table_path), *report.table)
    return report


def load_config(path: Optional[str], overrides: List[str], pipeline: Optional[str]) -> ExperimentConfig:
    mapping = {}
    if path:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as e:
            raise InvalidConfig(f"cannot read config {p}: {e.strerror or e}") from None
        mapping.update(parse_config_text(text, str(p)))
    for item in overrides:
        k, v = parse_override(item)
        mapping[k] = v
    if pipeline is not None:
        mapping["pipeline"] = pipeline
    return ExperimentConfig.from_mapping(mapping)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qjumpmaps", description="Quantum dynamical maps as jump series.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in PIPELINES:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", metavar="PATH", help="plain-text config of dotted key = value lines")
        p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[], dest="overrides",
                       help="override one config key (repeatable)")
        p.add_argument("--dump-maps", action="store_true", help="add re/im of every superoperator entry to the CSV")
        p.add_argument("--quiet", action="store_true", help="print nothing on success")
    sub.add_parser("list-models", help="list registered models")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        for name, desc in list_models():
            print(f"{name:20s} {desc}")
        return 0
    try:
        cfg = load_config(args.config, args.overrides, args.command)
        report = run(cfg, args.dump_maps)
    except (QJumpError, KeyError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"qjumpmaps: error: {msg}", file=sys.stderr)
        return 2
    if not args.quiet or not report.passed:
        print(report.render(), end="")
        for k, v in report.runtimes.items():
            print(f"runtime.{k} = {v:.3f} s")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
