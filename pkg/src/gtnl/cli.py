"""Command-line front end: ``gtnl <command> [options]``.

Every option can also be given in a TOML file passed with ``--config``;
keys are the option names with dashes replaced by underscores, either at
top level or inside a table named after the command.  Flags given on the
command line win over the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cache
from .behavior import standard_witness
from .ingest import BUNDLED, CountTable, DataError, derive_named, load_counts, save_json
from .mlns import (ConvergenceError, SettingsDistribution, TrialDistribution, empirical_from_counts,
                   mlns_fit, mlns_fit_grouped, zero_adjust)
from .pbr import (TestFactor, cao_locks, curve_csv, default_grid, evidence_curve, log_pvalue,
                  optimize_test_factor)
from .polytope import (HRep, ResourceLimitError, VRep, build_ns_hrep, enumerate_vertices,
                       extend_vertices, intersect_halfspace, intersect_hyperplane)
from .polytope.census import classify_census
from .scenario import TRIPARTITE, Scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER, EXIT_RESOURCE = 0, 2, 3, 4, 5
log = logging.getLogger("gtnl")


class UsageError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    witness: str = "auto"
    settings: object = "uniform"
    gap_tol: float = 1e-9
    cache_dir: str | None = None
    locks: str = "auto"
    split: float = 0.0
    seed: int = 0
    out: str | None = None

    def validate(self):
        if self.witness not in ("auto", "mao", "cao"):
            raise UsageError(f"unknown witness {self.witness!r}")
        if not self.gap_tol > 0:
            raise UsageError("tolerances must be positive")
        if not 0.0 <= self.split <= 1.0:
            raise UsageError("split fraction must lie in [0, 1]")
        if self.locks not in ("auto", "none", "cao"):
            raise UsageError(f"unknown lock choice {self.locks!r}")
        return self

    def settings_distribution(self, scenario: Scenario = TRIPARTITE) -> SettingsDistribution:
        if self.settings in (None, "uniform"):
            return SettingsDistribution.uniform(scenario)
        try:
            return SettingsDistribution(np.asarray(self.settings, dtype=float), scenario)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad settings distribution: {exc}") from exc


# helpers

def _emit(args, text: str, payload: dict):
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        print(text)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1) + "\n")


def _parse_scenario(text: str) -> Scenario:
    try:
        return Scenario.parse(text)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_count_input(spec: str):
    """A bundled dataset name, a four-party CSV or a CountTable JSON."""
    if spec in BUNDLED and not Path(spec).exists():
        return derive_named(spec)
    path = Path(spec)
    if not path.is_file():
        raise DataError(f"count file {spec!r} not found")
    return load_counts(path)


def _vertices(name: str, args) -> VRep:
    directory = getattr(args, "cache_dir", None)
    try:
        return cache.load_vertices(name, compute=not getattr(args, "no_compute", False),
                                   directory=directory)
    except FileNotFoundError as exc:
        raise DataError(str(exc)) from exc


def _config_from_args(args) -> AnalysisConfig:
    fields = AnalysisConfig.__dataclass_fields__
    kw = {k: getattr(args, k) for k in fields if getattr(args, k, None) is not None}
    return AnalysisConfig(**kw).validate()


# commands

def cmd_enumerate(args):
    s = _parse_scenario(args.scenario)
    mode = args.mode or "full"
    if mode != "full" and not args.witness:
        raise UsageError("--mode halfspace/hyperplane needs --witness")
    if args.witness and s != TRIPARTITE:
        raise UsageError("the bundled witnesses are defined for scenario 2,2,2")
    h = build_ns_hrep(s)
    if s == TRIPARTITE and not args.no_cache:
        base = _vertices("ns", args)
    else:
        base = enumerate_vertices(h, max_rays=args.max_rays)
    if mode == "full":
        v, hh, stem = base, h, f"ns_{''.join(map(str, s.settings))}"
    else:
        w = standard_witness(args.witness)
        name = ("saturating-" if mode == "hyperplane" else "halfspace-") + args.witness
        if not args.no_cache:
            v = _vertices(name, args)
        else:
            v = extend_vertices(h, base, w, mode, max_rays=args.max_rays)
        hh = intersect_hyperplane(h, w) if mode == "hyperplane" else intersect_halfspace(h, w)
        stem = cache.VERTEX_SETS[name]
    dim = hh.affine_dimension()
    out = _out_dir(args)
    v.save(out / f"{stem}.gtnlv")
    v.save(out / f"{stem}.json")
    _emit(args, f"{v.n_vertices} vertices, affine dimension {dim}\nwrote {out / stem}.{{json,gtnlv}}",
          {"vertices": v.n_vertices, "dimension": dim, "scenario": list(s.settings),
           "witness": args.witness, "mode": mode, "files": [f"{stem}.json", f"{stem}.gtnlv"]})
    return EXIT_OK


def _split_counts(ct: CountTable, frac: float, seed: int):
    if frac <= 0:
        return ct, ct
    rng = np.random.default_rng(seed)
    n_train = int(round(frac * ct.total))
    train = rng.multivariate_hypergeometric(ct.counts, n_train)
    return (ct.with_counts(train, f"train split {frac} (seed {seed})"),
            ct.with_counts(ct.counts - train, f"test split {1 - frac} (seed {seed})"))


def _fit(ct: CountTable, grouped, s: SettingsDistribution) -> TrialDistribution:
    e = empirical_from_counts(ct, s, grouped=grouped)
    q = mlns_fit_grouped(e, s) if grouped else mlns_fit(e, s)
    if np.any(ct.counts == 0):
        q = zero_adjust(q, e.n, s)
    return q


def cmd_analyze(args):
    cfg = _config_from_args(args)
    stage = "derive"
    try:
        ct, grouped = _load_count_input(args.counts)
        s = cfg.settings_distribution(ct.scenario)
        witness = cfg.witness if cfg.witness != "auto" else ("cao" if grouped else "mao")
        use_locks = cfg.locks == "cao" or (cfg.locks == "auto" and bool(grouped))
        locks = [cao_locks(grouped or ((0, 0, 0), (0, 1, 0)))] if use_locks else []
        train, test = _split_counts(ct, cfg.split, cfg.seed)
        stage = "mlns"
        q = _fit(train, grouped, s)
        stage = "vertices"
        args.cache_dir = cfg.cache_dir
        V = _vertices("saturating-" + witness, args)
        stage = "test-factor"
        tf = optimize_test_factor(q, V, s, locks=locks, gap_tol=cfg.gap_tol)
        stage = "p-value"
        ev = log_pvalue(tf, test, same_data=cfg.split <= 0)
    except (DataError, ConvergenceError, ResourceLimitError, UsageError) as exc:
        exc.stage = stage
        raise
    out = _out_dir(argparse.Namespace(out=cfg.out))
    save_json(ct, out / "counts.json")
    if cfg.split > 0:
        save_json(train, out / "counts_train.json")
        save_json(test, out / "counts_test.json")
    _write_json(out / "mlns.json", q.to_json_dict())
    tf.save(out / "test_factor.json")
    _write_json(out / "evidence.json", ev.to_json_dict())
    text = (f"witness {witness}, locks {'on' if locks else 'off'}\n"
            f"objective E_q[log2 F] = {tf.objective:.7f}\n"
            f"log10 p = {ev.log10_p:.4f}  (p = {ev.format_p()})")
    if ev.warning:
        text += f"\nwarning: {ev.warning}"
    _emit(args, text, {"witness": witness, "objective_log2": tf.objective,
                       "log10_p": ev.log10_p, "p": ev.format_p(), "warning": ev.warning,
                       "config": asdict(cfg)})
    return EXIT_OK


def cmd_curve(args):
    n = args.grid if args.grid is not None else 120
    if n < 1:
        raise UsageError("--grid must be a positive integer")
    if args.variant not in ("mao", "cao"):
        raise UsageError(f"unknown variant {args.variant!r}")
    V = _vertices("saturating-" + args.variant, args)
    pts = evidence_curve(args.variant, V, SettingsDistribution.uniform(), default_grid(n))
    text = curve_csv(pts, args.out)
    if args.json:
        print(json.dumps([{"theta": p.theta, "objective_log2": p.objective} for p in pts], indent=1))
    elif args.out is None:
        sys.stdout.write(text)
    else:
        print(f"{len(pts)} points written to {args.out}")
    return EXIT_OK


def cmd_census(args):
    V = _vertices("ns", args)
    c = classify_census(V, [standard_witness("mao"), standard_witness("cao")])
    _emit(args, c.format_table(nonzero_only=not args.all), c.to_json_dict())
    return EXIT_OK


def cmd_derive(args):
    ct, grouped = _load_count_input(args.input)
    d = ct.to_json_dict()
    d["grouped"] = [list(g) for g in grouped]
    if args.out:
        _write_json(Path(args.out), d)
    text = "\n".join(ct.log) + f"\n{ct.total} trials"
    if args.out:
        text += f", written to {args.out}"
    _emit(args, text, d)
    return EXIT_OK


def cmd_mlns(args):
    cfg = _config_from_args(args)
    ct, grouped = _load_count_input(args.counts)
    s = cfg.settings_distribution(ct.scenario)
    q = _fit(ct, grouped, s)
    if args.out:
        _write_json(Path(args.out), q.to_json_dict())
    rows = q.table()
    lines = ["xyz   " + " ".join(f"{''.join(map(str, o)):>9}" for o in ct.scenario.outcome_tuples)]
    for st, row in zip(ct.scenario.setting_tuples, rows):
        lines.append(f"{''.join(map(str, st))}   " + " ".join(f"{v:9.7f}" for v in row))
    lines.append(f"log-likelihood (base 2) {q.report.get('objective_log2', float('nan')):.6f}")
    _emit(args, "\n".join(lines), q.to_json_dict())
    return EXIT_OK


def cmd_pvalue(args):
    try:
        tf = TestFactor.load(args.test_factor)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read test factor {args.test_factor!r}: {exc}") from exc
    ct, _ = _load_count_input(args.counts)
    ev = log_pvalue(tf, ct, same_data=args.same_data)
    text = f"log2 T = {ev.log2_T:.4f}\nlog10 p = {ev.log10_p:.4f}  (p = {ev.format_p()})"
    if ev.zero_cell_hit:
        text += "\ncounts hit a cell with F = 0; p = 1"
    if ev.warning:
        text += f"\nwarning: {ev.warning}"
    _emit(args, text, ev.to_json_dict())
    return EXIT_OK


# parser

def _common(p, cache_opts=True):
    p.add_argument("--json", action="store_true", default=None, help="machine-readable stdout")
    if cache_opts:
        p.add_argument("--cache-dir", default=None,
                       help=f"vertex cache directory (default ${cache.ENV_VAR} or ~/.cache/gtnl)")
        p.add_argument("--no-compute", action="store_true", default=None,
                       help="fail instead of enumerating a missing vertex list")


def _analysis_opts(p):
    p.add_argument("--witness", choices=("auto", "mao", "cao"), default=None)
    p.add_argument("--settings", default=None, help="'uniform' or 8 comma-separated probabilities")
    p.add_argument("--gap-tol", type=float, default=None)
    p.add_argument("--locks", choices=("auto", "none", "cao"), default=None)
    p.add_argument("--split", type=float, default=None, help="fraction of trials used for training")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gtnl", description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None, help="TOML configuration file")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", help="vertex enumeration of a (witness-cut) NS polytope")
    p.add_argument("--scenario", default=None, help="settings per party, e.g. 2,2,2")
    p.add_argument("--witness", choices=("mao", "cao"), default=None)
    p.add_argument("--mode", choices=("full", "halfspace", "hyperplane"), default=None)
    p.add_argument("--max-rays", type=int, default=None)
    p.add_argument("--no-cache", action="store_true", default=None, help="always enumerate from scratch")
    p.add_argument("--out", default=None, help="output directory")
    _common(p)
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("analyze", help="counts -> MLNS -> test factor -> p-value")
    p.add_argument("counts", help="bundled dataset (mao1, mao2, cao), four-party CSV or counts JSON")
    _analysis_opts(p)
    p.add_argument("--out", default=None, help="output directory")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("curve", help="evidence against visibility for depolarized GHZ")
    p.add_argument("--variant", choices=("mao", "cao"), default=None)
    p.add_argument("--grid", type=int, default=None, help="number of grid points (default 120)")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    _common(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("census", help="relabeling classes of the NS vertices")
    p.add_argument("--all", action="store_true", default=None, help="include classes with empty profile")
    _common(p)
    p.set_defaults(func=cmd_census)

    p = sub.add_parser("derive", help="three-party counts from four-party data")
    p.add_argument("input")
    p.add_argument("--out", default=None, help="CountTable JSON path")
    _common(p, cache_opts=False)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("mlns", help="maximum-likelihood no-signalling fit")
    p.add_argument("counts")
    _analysis_opts(p)
    p.add_argument("--out", default=None, help="TrialDistribution JSON path")
    _common(p, cache_opts=False)
    p.set_defaults(func=cmd_mlns)

    p = sub.add_parser("pvalue", help="p-value of counts under a saved test factor")
    p.add_argument("counts")
    p.add_argument("--test-factor", required=True)
    p.add_argument("--same-data", action="store_true", default=None,
                   help="counts were used to tune the test factor")
    _common(p, cache_opts=False)
    p.set_defaults(func=cmd_pvalue)
    return ap


DEFAULTS = {
    "scenario": "2,2,2", "variant": "cao", "max_rays": None, "json": False, "no_compute": False,
    "no_cache": False, "all": False, "same_data": False,
}


def load_config(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"bad config {path}: {exc}") from exc


def _merge(args, cfg: dict):
    """Fill options left unset on the command line from the config, then defaults."""
    section = cfg.get(args.command, {})
    flat = {k: v for k, v in cfg.items() if not isinstance(v, dict)}
    flat.update(section if isinstance(section, dict) else {})
    for key, val in flat.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} does not apply to '{args.command}'")
        if getattr(args, key) is None:
            setattr(args, key, val)
    for key, val in DEFAULTS.items():
        if getattr(args, key, 0) is None:
            setattr(args, key, val)
    if isinstance(getattr(args, "settings", None), str) and args.settings != "uniform":
        try:
            args.settings = [float(x) for x in args.settings.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --settings value {args.settings!r}") from exc
    return args


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else {}
        _merge(args, cfg)
        return args.func(args)
    except UsageError as exc:
        print(f"gtnl: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"gtnl: data error{_stage(exc)}: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ConvergenceError as exc:
        print(f"gtnl: solver did not converge{_stage(exc)}: {exc}", file=sys.stderr)
        if exc.report:
            print(json.dumps(exc.report, indent=1, default=str), file=sys.stderr)
        return EXIT_SOLVER
    except ResourceLimitError as exc:
        print(f"gtnl: resource limit reached{_stage(exc)}: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


def _stage(exc) -> str:
    st = getattr(exc, "stage", None)
    return f" [{st}]" if st else ""


if __name__ == "__main__":
    sys.exit(main())
