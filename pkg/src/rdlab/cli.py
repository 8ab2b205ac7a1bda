"""Command-line driver: JSON config in, CSV + manifest out.

    rdlab <subcommand> --config PATH [--seed U64] [--threads N] [--deterministic] [--out PATH]

Exit codes: 0 success, 1 config error, 2 budget error, 64 usage error.
Field names are documented in docs/config.md.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .binning import compare as run_compare, comparison_csv, run_ppe
from .errors import ConfigError, SizeError
from .prob import Channel, JointPmf, Pmf
from .rdnumerics import GammaGrid, blahut_arimoto, rd_curve, theorem1_bound
from .softcover import sweep
from .sources import DistortionMeasure, hamming
from .systems import SystemReport, run_bt_corner, run_p2p, run_wz

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_USAGE = 0, 1, 2, 64
SUBCOMMANDS = ("p2p", "wz", "bt", "softcover", "exponent", "rdcurve", "ppe", "compare")

# field -> (kind, default); a default of REQUIRED marks a mandatory field
REQUIRED = object()
_COMMON = {"seed": ("int", 0), "budget": ("int?", None)}
_SYSTEM = {"n": ("int", REQUIRED), "D": ("float", REQUIRED), "trials": ("int", REQUIRED)}
SCHEMAS = {
    "p2p": {**_COMMON, **_SYSTEM, "source": ("pmf", REQUIRED), "test_channel": ("channel?", None),
            "design_D": ("float?", None), "distortion": ("distortion", "hamming"),
            "R": ("float", REQUIRED), "mode": ("str", "stochastic"), "codebook": ("str", "auto")},
    "wz": {**_COMMON, **_SYSTEM, "joint": ("joint", REQUIRED), "aux_channel": ("channel", REQUIRED),
           "phi": ("table", REQUIRED), "distortion": ("distortion", "hamming"), "R": ("float", REQUIRED),
           "Rprime": ("float", REQUIRED), "mode": ("str", "stochastic"), "codebook": ("str", "auto")},
    "bt": {**_COMMON, "n": ("int", REQUIRED), "trials": ("int", REQUIRED), "joint": ("joint", REQUIRED),
           "channel1": ("channel", REQUIRED), "channel2": ("channel", REQUIRED),
           "phi1": ("table", REQUIRED), "phi2": ("table", REQUIRED),
           "distortion1": ("distortion", "hamming"), "distortion2": ("distortion", "hamming"),
           "R1": ("float", REQUIRED), "R2": ("float", REQUIRED), "R2prime": ("float", REQUIRED),
           "D1": ("float", REQUIRED), "D2": ("float", REQUIRED), "corner": ("str", "C1"),
           "mode": ("str", "stochastic"), "codebook": ("str", "auto")},
    "softcover": {**_COMMON, "joint": ("joint", REQUIRED), "R_list": ("floats", REQUIRED),
                  "n_list": ("ints", REQUIRED), "codebooks_per_cell": ("int", REQUIRED),
                  "mode": ("str", "marginal")},
    "exponent": {**_COMMON, "source": ("pmf", REQUIRED), "candidates": ("channels", REQUIRED),
                 "distortion": ("distortion", "hamming"), "D": ("float", REQUIRED),
                 "R": ("float", REQUIRED), "n_list": ("ints", REQUIRED), "grid": ("dict", {})},
    "rdcurve": {**_COMMON, "source": ("pmf", REQUIRED), "distortion": ("distortion", "hamming"),
                "D_list": ("floats", REQUIRED), "tol": ("float", 1e-10)},
    "ppe": {**_COMMON, **_SYSTEM, "source": ("pmf", REQUIRED), "test_channel": ("channel", REQUIRED),
            "distortion": ("distortion", "hamming"), "R": ("float", REQUIRED),
            "Rprime": ("float", REQUIRED)},
}
SCHEMAS["compare"] = dict(SCHEMAS["ppe"])


@dataclass
class ExperimentConfig:
    """A subcommand plus its parameters, exactly as they appear in the JSON file."""

    subcommand: str
    params: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"subcommand": self.subcommand, **self.params}, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, subcommand: str | None = None) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        sub = raw.pop("subcommand", subcommand)
        if subcommand is not None and sub != subcommand:
            raise ConfigError(f"field 'subcommand': config is for {sub!r}, invoked as {subcommand!r}")
        if sub not in SCHEMAS:
            raise ConfigError(f"field 'subcommand': unknown value {sub!r}")
        return cls(sub, raw)

    def resolved(self) -> dict:
        """Parameters with defaults filled in and every field validated."""
        schema = SCHEMAS[self.subcommand]
        unknown = sorted(set(self.params) - set(schema))
        if unknown:
            raise ConfigError(f"field '{unknown[0]}': not a field of {self.subcommand!r}")
        out = {}
        for name, (kind, default) in schema.items():
            if name not in self.params:
                if default is REQUIRED:
                    raise ConfigError(f"field '{name}': missing")
                out[name] = default
                continue
            out[name] = _check(name, kind, self.params[name])
        return out


def _check(name: str, kind: str, value):
    optional = kind.endswith("?")
    kind = kind.rstrip("?")
    if value is None:
        if optional:
            return None
        raise ConfigError(f"field '{name}': must not be null")
    try:
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError("expected an integer")
            return value
        if kind == "float":
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError("expected a number")
            return float(value)
        if kind == "str":
            if not isinstance(value, str):
                raise ConfigError("expected a string")
            return value
        if kind in ("floats", "ints"):
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a non-empty list")
            return [_check(f"{name}[{i}]", kind[:-1], v) for i, v in enumerate(value)]
        if kind == "dict":
            if not isinstance(value, dict):
                raise ConfigError("expected an object")
            return value
        if kind == "pmf":
            Pmf(value)
            return value
        if kind == "joint":
            JointPmf(value)
            return value
        if kind == "channel":
            for i, row in enumerate(value):
                try:
                    Pmf(row)
                except ConfigError as exc:
                    raise ConfigError(f"row {i}: {exc}") from None
            Channel(value)
            return value
        if kind == "channels":
            if not isinstance(value, list) or not value:
                raise ConfigError("expected a non-empty list of channels")
            return [_check(f"{name}[{i}]", "channel", v) for i, v in enumerate(value)]
        if kind == "table":
            np.array(value, dtype=np.int64)
            return value
        if kind == "distortion":
            if value == "hamming":
                return value
            DistortionMeasure(value)
            return value
    except ConfigError as exc:
        if str(exc).startswith("field '"):
            raise
        raise ConfigError(f"field '{name}': {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{name}': {exc}") from None
    raise AssertionError(kind)


def _distortion(spec, k_in: int, k_out: int | None, name: str) -> DistortionMeasure:
    """Hamming (square unless ``k_out`` is given) or an explicit matrix with ``k_in`` rows."""
    d = hamming(k_in, k_out) if spec == "hamming" else DistortionMeasure(spec)
    if d.shape[0] != k_in or (k_out is not None and d.shape[1] != k_out):
        raise ConfigError(f"field '{name}': shape {d.shape} does not fit the alphabets")
    return d


# ---------------------------------------------------------------------------
# CSV writers


def _rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def system_csv(report: SystemReport) -> str:
    rows = []
    for k, (mean, std) in enumerate(zip(report.mean_distortion, report.distortion_std), start=1):
        rows.append([report.system, report.config.get("n"), report.trials, report.codebook_mode, k,
                     float(mean), float(std), float(report.excess_freq),
                     "" if report.decode_error_rate is None else float(report.decode_error_rate),
                     report.fallback_count])
    return _rows_csv(["system", "n", "trials", "codebook_mode", "measure", "mean_distortion",
                      "distortion_std", "excess_freq", "decode_error_rate", "fallback_count"], rows)


# ---------------------------------------------------------------------------
# subcommands; each returns ({suffix: csv_text}, extra manifest entries)


def _cmd_p2p(p, seed, threads):
    source = Pmf(p["source"])
    k = source.size
    if p["test_channel"] is not None:
        ch = Channel(p["test_channel"])
        d = _distortion(p["distortion"], k, ch.n_outputs, "distortion")
    else:
        if p["design_D"] is None:
            raise ConfigError("field 'test_channel': missing (or give 'design_D')")
        d = _distortion(p["distortion"], k, None, "distortion")
        ch = blahut_arimoto(source, d, p["design_D"]).channel
    rep = run_p2p(source, ch, d, p["R"], p["n"], p["D"], p["trials"], seed,
                  mode=p["mode"], codebook=p["codebook"], threads=threads)
    return {"": system_csv(rep)}, {"info": _plain(rep.info), "warnings": rep.warnings}


def _cmd_wz(p, seed, threads):
    joint = JointPmf(p["joint"])
    aux = Channel(p["aux_channel"])
    d = _distortion(p["distortion"], joint.shape[0], None, "distortion")
    rep = run_wz(joint, aux, p["phi"], d, p["R"], p["Rprime"], p["n"], p["D"], p["trials"], seed,
                 mode=p["mode"], codebook=p["codebook"], threads=threads)
    return {"": system_csv(rep)}, {"info": _plain(rep.info), "warnings": rep.warnings}


def _cmd_bt(p, seed, threads):
    joint = JointPmf(p["joint"])
    n1, n2 = joint.shape
    d1 = _distortion(p["distortion1"], n1, None, "distortion1")
    d2 = _distortion(p["distortion2"], n2, None, "distortion2")
    args = (joint, Channel(p["channel1"]), Channel(p["channel2"]), p["phi1"], p["phi2"], d1, d2)
    if p["corner"] not in ("C1", "C2"):
        raise ConfigError("field 'corner': expected 'C1' or 'C2'")
    rep = run_bt_corner(p["corner"], *args, p["R1"], p["R2"], p["R2prime"], p["n"], (p["D1"], p["D2"]),
                        p["trials"], seed, mode=p["mode"], codebook=p["codebook"], threads=threads)
    return {"": system_csv(rep)}, {"info": _plain(rep.info), "warnings": rep.warnings}


def _cmd_softcover(p, seed, threads):
    rep = sweep(JointPmf(p["joint"]), p["R_list"], p["n_list"], p["codebooks_per_cell"], seed,
                mode=p["mode"], threads=threads)
    return {"": rep.codebook_csv(), ".aggregate": rep.aggregate_csv()}, {}


def _cmd_exponent(p, seed, threads):
    source = Pmf(p["source"])
    chans = [Channel(c) for c in p["candidates"]]
    d = _distortion(p["distortion"], source.size, chans[0].n_outputs, "distortion")
    try:
        grid = GammaGrid(**p["grid"])
    except TypeError as exc:
        raise ConfigError(f"field 'grid': {exc}") from None
    table = theorem1_bound(source, chans, d, p["D"], p["R"], p["n_list"], grid)
    if not table.feasible:
        reasons = "; ".join(f"candidate {i}: {r}" for i, r in table.skipped)
        raise ConfigError(f"field 'candidates': no candidate gives a non-trivial bound ({reasons})")
    extra = {"best_channel_id": table.best, "skipped": [list(s) for s in table.skipped],
             "boundary": {str(k): r.boundary for k, r in table.reports.items()}}
    return {"": table.to_csv()}, extra


def _cmd_rdcurve(p, seed, threads):
    source = Pmf(p["source"])
    d = _distortion(p["distortion"], source.size, None, "distortion")
    points = rd_curve(source, d, p["D_list"], p["tol"])
    rows = [[pt.D, float(pt.R), float(pt.distortion), float(pt.slope)] for pt in points]
    return {"": _rows_csv(["D", "R", "distortion", "slope"], rows)}, {}


def _cmd_ppe(p, seed, threads):
    source, ch = Pmf(p["source"]), Channel(p["test_channel"])
    d = _distortion(p["distortion"], source.size, ch.n_outputs, "distortion")
    rep = run_ppe(source, ch, d, p["R"], p["Rprime"], p["n"], p["D"], p["trials"], seed, threads=threads)
    return {"": system_csv(rep)}, {"info": _plain(rep.info), "warnings": rep.warnings}


def _cmd_compare(p, seed, threads):
    source, ch = Pmf(p["source"]), Channel(p["test_channel"])
    d = _distortion(p["distortion"], source.size, ch.n_outputs, "distortion")
    lik, ppe = run_compare(source, ch, d, p["R"], p["Rprime"], p["n"], p["D"], p["trials"], seed,
                           threads=threads)
    return {"": comparison_csv(p["n"], p["R"], p["Rprime"], lik, ppe)}, {
        "warnings": lik.warnings + ppe.warnings}


COMMANDS = {"p2p": _cmd_p2p, "wz": _cmd_wz, "bt": _cmd_bt, "softcover": _cmd_softcover,
            "exponent": _cmd_exponent, "rdcurve": _cmd_rdcurve, "ppe": _cmd_ppe, "compare": _cmd_compare}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rdlab", description="Likelihood-encoder lossy compression lab.")
    parser.add_argument("--version", action="version", version=f"rdlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        p.add_argument("--deterministic", action="store_true", help="single thread, ordered reduction")
        p.add_argument("--out", help="output CSV path (default: <subcommand>.csv)")
    return parser


def _outputs(out: Path, csvs: dict) -> dict:
    paths = {}
    for suffix, _ in csvs.items():
        paths[suffix] = out if not suffix else out.with_name(out.stem + suffix + out.suffix)
    return paths


@contextlib.contextmanager
def _budget_env(value):
    if value is None:
        yield
        return
    old = os.environ.get("RDLAB_BUDGET")
    os.environ["RDLAB_BUDGET"] = str(value)
    try:
        yield
    finally:
        if old is None:
            del os.environ["RDLAB_BUDGET"]
        else:
            os.environ["RDLAB_BUDGET"] = old


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    if argv and not argv[0].startswith("-") and argv[0] not in SUBCOMMANDS:
        parser.print_usage(sys.stderr)
        print(f"rdlab: unknown subcommand {argv[0]!r}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"rdlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.subcommand is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        cfg = ExperimentConfig.from_json(text, args.subcommand)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg.params["seed"] = args.seed
        params = cfg.resolved()
        threads = 1 if args.deterministic else (args.threads or os.cpu_count() or 1)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        with _budget_env(params["budget"]), warnings.catch_warnings():
            warnings.simplefilter("ignore")
            csvs, extra = COMMANDS[args.subcommand](params, params["seed"], threads)
    except ConfigError as exc:
        print(f"rdlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeError as exc:
        print(f"rdlab: budget error: {exc}", file=sys.stderr)
        return EXIT_BUDGET

    out = Path(args.out or f"{args.subcommand}.csv")
    paths = _outputs(out, csvs)
    manifest = {
        "version": __version__,
        "subcommand": args.subcommand,
        "seed": params["seed"],
        "deterministic": bool(args.deterministic),
        "threads": threads,
        "config": json.loads(cfg.to_json()),
        "resolved": params,
        "outputs": [str(p) for p in paths.values()],
        **extra,
    }
    out.parent.mkdir(parents=True, exist_ok=True)
    for suffix, text in csvs.items():
        paths[suffix].write_text(text)
    out.with_name(out.name + ".manifest.json").write_text(json.dumps(_plain(manifest), indent=2) + "\n")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
