"""Command-line experiment runner.

``chartddm run`` sweeps N2 for one manifold and writes a CSV table, a text
table, per-chart solution dumps, a progress log and a run manifest.
``chartddm verify`` runs the atlas and flat-oracle self-checks, and
``chartddm table`` re-renders a CSV table.

Exit codes: 0 success, 1 numeric failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import _backend, analysis, checks
from .assembly import COEFFICIENT_MODES
from .atlas import chart_grid_counts, counts_for_spacing
from .ddm import DDMConfig, build_subproblems, default_workers, n1_from_n2, run
from .errors import (
    DDMNonConvergence,
    InvalidDataError,
    IterationFailure,
    NumericDomainError,
    OutOfDomainError,
    UncoveredPointError,
)
from .grid import dump_fefunction
from .manifolds import BUILTINS, make_builtin_atlas

SCHEMA_VERSION = 1
MAX_N2 = 80
EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2
FLAT = ("flat_square", "flat_interval")

class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    manifold: str
    n2: tuple[int, ...] = (10,)
    s: Optional[float] = None
    delta: Optional[float] = None
    r: Optional[float] = None
    b: Optional[float] = None
    overlap: Optional[float] = None
    charts: Optional[int] = None
    n1_ratio: float = 0.4
    cg_tol: float = 1e-8
    max_outer: int = 500
    workers: Optional[int] = None
    quad: int = 2
    coefficients: str = "center"
    jacobi: bool = False
    force: bool = False
    out: Path = field(default_factory=lambda: Path("runs"))

    def atlas_params(self) -> dict:
        keys = {
            "b4": ("s", "delta", "r", "b"),
            "b2xs2": ("s", "delta", "r", "b"),
            "cp2": ("r", "b"),
            "flat_square": ("overlap", "charts", "b"),
            "flat_interval": ("overlap", "charts", "b"),
        }[self.manifold]
        extra = [k for k in ("s", "delta", "r", "overlap", "charts")
                 if k not in keys and getattr(self, k) is not None]
        if extra:
            raise ConfigError(f"{self.manifold} does not take parameter(s) {', '.join(extra)}")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def counts(self, atlas, n2: int):
        if self.manifold in FLAT:
            # n2 = cells per unit length on flat atlases
            return counts_for_spacing(atlas, 1.0 / n2)
        return chart_grid_counts(atlas, n1_from_n2(n2, self.n1_ratio), n2)


# key -> parser for config-file values; CLI flags use the same names
_FIELDS = {
    "manifold": str,
    "n2": lambda v: tuple(int(x) for x in str(v).split(",") if x.strip()),
    "s": float,
    "delta": float,
    "r": float,
    "b": float,
    "overlap": float,
    "charts": int,
    "n1_ratio": float,
    "cg_tol": float,
    "max_outer": int,
    "workers": int,
    "quad": int,
    "coefficients": str,
    "jacobi": lambda v: v if isinstance(v, bool) else _parse_bool(v),
    "force": lambda v: v if isinstance(v, bool) else _parse_bool(v),
    "out": Path,
}


def _parse_bool(v: str) -> bool:
    t = str(v).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELDS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.manifold not in BUILTINS:
        raise ConfigError(f"unknown manifold {cfg.manifold!r}; choose from {', '.join(sorted(BUILTINS))}")
    if not cfg.n2 or any(n < 1 for n in cfg.n2):
        raise ConfigError("n2 must be a non-empty list of positive integers")
    if max(cfg.n2) > MAX_N2 and not cfg.force:
        raise ConfigError(f"N2 > {MAX_N2} needs --force (memory guardrail)")
    if not cfg.n1_ratio > 0:
        raise ConfigError("n1_ratio must be positive")
    if not 0 < cfg.cg_tol < 1:
        raise ConfigError("cg_tol must lie in (0, 1)")
    if cfg.max_outer < 1:
        raise ConfigError("max_outer must be at least 1")
    if cfg.workers is not None and cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    if cfg.quad < 2:
        raise ConfigError("quad needs at least 2 points per axis")
    if cfg.coefficients not in COEFFICIENT_MODES:
        raise ConfigError(f"coefficients must be one of {', '.join(COEFFICIENT_MODES)}")
    cfg.atlas_params()


def parse_config(values: dict) -> ExperimentConfig:
    """Build and validate a config from string or typed values."""
    unknown = set(values) - set(_FIELDS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(unknown))}")
    if "manifold" not in values:
        raise ConfigError("--manifold is required")
    typed = {}
    for key, value in values.items():
        try:
            typed[key] = _FIELDS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    cfg = ExperimentConfig(**typed)
    _validate(cfg)
    return cfg


def _add_run_args(p: argparse.ArgumentParser) -> None:
    # every default is None so that file values only lose to explicit flags
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--manifold", choices=sorted(BUILTINS))
    p.add_argument("--s", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--b", type=float, help="reaction coefficient (atlas default otherwise)")
    p.add_argument("--overlap", type=float, help="flat atlases: strip overlap width")
    p.add_argument("--charts", type=int, help="flat atlases: 1 or 2 charts")
    p.add_argument("--n2", help="comma-separated N2 list, e.g. 10,20 (flat: cells per unit)")
    p.add_argument("--n1-ratio", dest="n1_ratio", type=float, help="N1 = round(ratio * N2), default 0.4")
    p.add_argument("--cg-tol", dest="cg_tol", type=float)
    p.add_argument("--max-outer", dest="max_outer", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--quad", type=int, help="Gauss points per axis")
    p.add_argument("--coefficients", choices=COEFFICIENT_MODES,
                   help="sample metric and f at cell centres (default) or Gauss points")
    p.add_argument("--jacobi", action="store_true", default=None)
    p.add_argument("--force", action="store_true", default=None, help=f"allow N2 > {MAX_N2}")
    p.add_argument("--out", help="output directory (default ./runs)")
    p.add_argument("-v", "--verbose", action="store_true")


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    values = read_config_file(ns.config) if ns.config else {}
    for key in _FIELDS:
        v = getattr(ns, key, None)
        if v is not None:
            values[key] = v
    return parse_config(values)


def _title(cfg: ExperimentConfig, atlas) -> str:
    params = ", ".join(f"{k}={v:g}" for k, v in atlas.params.items())
    return f"{cfg.manifold} ({params}), b={atlas.b:g}"


def _write_manifest(path: Path, entries: list[tuple[str, object]]) -> None:
    with open(path, "w") as fh:
        for key, value in entries:
            fh.write(f"{key} = {value}\n")


def run_experiment(cfg: ExperimentConfig, stream=None) -> int:
    """Run the sweep and write every artifact; returns the exit status."""
    stream = stream or sys.stdout
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        atlas = make_builtin_atlas(cfg.manifold, **cfg.atlas_params())
    except (ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    workers = cfg.workers or default_workers(atlas.m)

    handler = logging.FileHandler(out / "progress.log", mode="w")
    handler.setFormatter(logging.Formatter("%(message)s"))
    ddm_log = logging.getLogger("chartddm.ddm")
    ddm_log.addHandler(handler)
    old_level, old_propagate = ddm_log.level, ddm_log.propagate
    # progress goes to the log file; the console only sees it with --verbose
    ddm_log.propagate = logging.getLogger().isEnabledFor(logging.INFO)
    ddm_log.setLevel(logging.INFO)

    manifest = [("schema_version", SCHEMA_VERSION)]
    manifest += [(k, ",".join(map(str, v)) if k == "n2" else v)
                 for k, v in asdict(cfg).items() if k != "out"]
    manifest += [("atlas_" + k, v) for k, v in atlas.params.items()]
    manifest += [("b_effective", atlas.b), ("workers_effective", workers),
                 ("backend", _backend.name)]
    reports: list[analysis.ErrorReport] = []
    status = EXIT_OK
    title = _title(cfg, atlas)
    try:
        for n2 in cfg.n2:
            counts = cfg.counts(atlas, n2)
            ddm_cfg = DDMConfig(
                atlas=atlas, counts=counts, cg_tol=cfg.cg_tol, max_outer=cfg.max_outer,
                quad_points=cfg.quad, workers=workers, jacobi=cfg.jacobi,
                coefficients=cfg.coefficients,
            )
            t0 = time.perf_counter()
            subs = build_subproblems(ddm_cfg)
            t1 = time.perf_counter()
            ddm_log.info("# N2=%d", n2)
            result = run(ddm_cfg, subs)
            t2 = time.perf_counter()
            if atlas.exact is not None:
                rep = analysis.result_errors(atlas, result)
            else:
                rep = analysis.ErrorReport(analysis.grid_scale([s.grid for s in subs]), n0=result.n0)
            reports.append(rep)
            run_dir = out / f"n2_{n2}"
            run_dir.mkdir(exist_ok=True)
            for j, sol in enumerate(result.state.solutions):
                dump_fefunction(sol, run_dir / f"chart_{j}.fef")
            manifest += [
                (f"n2_{n2}.counts", ";".join(",".join(map(str, c)) for c in counts)),
                (f"n2_{n2}.h", repr(rep.h)),
                (f"n2_{n2}.n0", result.n0),
                (f"n2_{n2}.outer_steps", len(result.history)),
                (f"n2_{n2}.cg_total", result.total_cg_iterations),
                (f"n2_{n2}.assembly_seconds", f"{t1 - t0:.3f}"),
                (f"n2_{n2}.solve_seconds", f"{t2 - t1:.3f}"),
            ]
            print(f"N2={n2} h={rep.h:.6g} n0={result.n0} cg_total={result.total_cg_iterations} "
                  f"time={t2 - t0:.1f}s", file=stream)
            if cfg.manifold == "flat_square" and atlas.m == 2:
                oracle = checks.flat_oracle(1.0 / n2, overlap=atlas.params["overlap"], b=atlas.b,
                                            cg_tol=cfg.cg_tol, workers=workers)
                print(oracle.line(), file=stream)
                manifest.append((f"n2_{n2}.oracle", oracle.verdict.split()[0]))
                if oracle.verdict == "FAIL":
                    status = EXIT_NUMERIC
            _write_tables(out, reports, title)
    except (IterationFailure, DDMNonConvergence, NumericDomainError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        manifest.append(("failure", str(exc).replace("\n", " ")))
        status = EXIT_NUMERIC
    except (UncoveredPointError, OutOfDomainError, InvalidDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.append(("failure", str(exc).replace("\n", " ")))
        status = EXIT_CONFIG
    finally:
        ddm_log.removeHandler(handler)
        ddm_log.setLevel(old_level)
        ddm_log.propagate = old_propagate
        handler.close()
        _write_tables(out, reports, title)
        _write_manifest(out / "manifest.txt", manifest + [("status", status)])
    if reports:
        print((out / "table.txt").read_text(), end="", file=stream)
    return status


def _write_tables(out: Path, reports, title: str) -> None:
    (out / "table.csv").write_text(analysis.to_csv(reports))
    (out / "table.txt").write_text(analysis.render_table(analysis.table_rows(reports), title))


def verify(points: int = 200, pou_points: int = 1000, seed: int = 0, oracle: bool = True,
           stream=None) -> int:
    """Metric compatibility, transition roundtrips, PoU sums and the flat oracle."""
    stream = stream or sys.stdout
    ok = True

    def report(name, value, bound):
        nonlocal ok
        passed = bool(value <= bound)
        ok &= passed
        print(f"{name}: {value:.3e} <= {bound:g} {'PASS' if passed else 'FAIL'}", file=stream)

    for name in sorted(BUILTINS):
        atlas = make_builtin_atlas(name)
        if atlas.m > 1:
            report(f"{name} metric compatibility", checks.metric_compatibility(atlas, points, seed), 1e-5)
            report(f"{name} transition roundtrip", checks.transition_roundtrip(atlas, points, seed), 1e-10)
        report(f"{name} partition of unity", checks.pou_sum_error(atlas, pou_points, seed), 1e-10)
    if oracle:
        for n in (8, 16):
            res = checks.flat_oracle(1.0 / n)
            ok &= res.passed
            print(res.line(), file=stream)
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chartddm", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one N2 sweep")
    _add_run_args(p_run)
    p_ver = sub.add_parser("verify", help="atlas invariants and flat oracle")
    p_ver.add_argument("--points", type=int, default=200)
    p_ver.add_argument("--pou-points", type=int, default=1000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--no-oracle", dest="oracle", action="store_false")
    p_tab = sub.add_parser("table", help="render a table.csv as text")
    p_tab.add_argument("csv")
    p_tab.add_argument("--title", default="")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command == "run":
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                            format="%(message)s")
        try:
            cfg = config_from_args(ns)
        except ConfigError as exc:
            print(f"chartddm run: error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return run_experiment(cfg)
    if ns.command == "verify":
        return verify(ns.points, ns.pou_points, ns.seed, ns.oracle)
    try:
        rows = analysis.read_csv(Path(ns.csv).read_text())
    except (OSError, ValueError) as exc:
        print(f"chartddm table: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(analysis.render_table(rows, ns.title), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
