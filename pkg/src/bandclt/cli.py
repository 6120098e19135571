"""Command line interface: ``bandclt <subcommand> [--config FILE] [--out DIR] ...``.

Every run writes its artifacts plus ``manifest.json`` (resolved config, seed,
timestamps and SHA-256 digests of the other files) into the output
directory.  On failure a JSON error object is printed to stdout, files
written by the run are removed and the exit status is nonzero.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .combinatorics import gamma_closed, gamma_table, moment_coeff
from .ensemble import EnsembleSpec
from .errors import BandCltError, ConfigError, InvalidSpecError
from .montecarlo import (
    McConfig,
    calibrate_ks_threshold,
    clt_diagnostics,
    empirical_a,
    empirical_bilinear,
    run_linear_stat,
    summarize_values,
    sweep_band_scaling,
)
from .spectral import banded_unitary_norm, fit_log_trend, resolvent_offdiag_mean
from .testfunctions import parse_test_function
from .varengine import var_band

SUBCOMMANDS = (
    "simulate",
    "analytic-var",
    "moments",
    "gamma",
    "bilinear",
    "empirical-a",
    "sweep",
    "band-norm",
    "resolvent",
    "clt-check",
)

DEFAULTS = {
    "n": None,
    "b": None,
    "sigma": 1.0,
    "dist": "gaussian",
    "diag_dist": None,
    "topology": "periodic",
    "phi": "x^2",
    "reps": 100,
    "seed": 0,
    "workers": 1,
    "kappa4": None,
    "nodes": 200,
    "f": None,
    "g": None,
    "t_grid": [0.5, 1.0, 2.0],
    "b_list": None,
    "z": [0.0, 1.0],
    "max_order": 10,
    "ks_threshold": None,
}

ENSEMBLE_COMMANDS = {"simulate", "bilinear", "empirical-a", "sweep", "resolvent", "clt-check"}


# -- configuration ------------------------------------------------------------


def parse_config(path=None, overrides=None) -> dict:
    """Read a JSON config, reject unknown keys and fill documented defaults.

    ``overrides`` (from command-line flags) replace file values when not None.
    """
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config: {exc.msg}", line=exc.lineno, column=exc.colno) from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}", field=unknown[0])
    cfg = dict(DEFAULTS)
    cfg.update(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _require_int(cfg, key, minimum):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {v!r}", field=key)


def _validate(cfg):
    for key, minimum in (("reps", 1), ("seed", 0), ("workers", 1), ("nodes", 8), ("max_order", 0)):
        _require_int(cfg, key, minimum)
    if cfg["seed"] >= 2**64:
        raise ConfigError("seed must fit in 64 bits", field="seed")
    if not isinstance(cfg["sigma"], (int, float)) or isinstance(cfg["sigma"], bool):
        raise ConfigError("sigma must be a number", field="sigma")
    for key in ("n", "b"):
        if cfg[key] is not None:
            _require_int(cfg, key, 0 if key == "b" else 1)
    for key in ("phi", "f", "g"):
        if cfg[key] is not None:
            try:
                parse_test_function(cfg[key])
            except InvalidSpecError as exc:
                raise ConfigError(str(exc), field=key) from None
    if cfg["n"] is not None and cfg["b"] is not None:
        ensemble_from_config(cfg)
    z = cfg["z"]
    if not (isinstance(z, list) and len(z) == 2 and all(isinstance(v, (int, float)) for v in z)):
        raise ConfigError("z must be [re, im]", field="z")


def ensemble_from_config(cfg) -> EnsembleSpec:
    if cfg["n"] is None or cfg["b"] is None:
        raise ConfigError("n and b are required for this subcommand", field="n" if cfg["n"] is None else "b")
    try:
        return EnsembleSpec.build(cfg["n"], cfg["b"], float(cfg["sigma"]), cfg["dist"], cfg["diag_dist"],
                                  cfg["topology"], cfg["seed"])
    except (InvalidSpecError, TypeError, ValueError) as exc:
        field = getattr(exc, "field", None)
        field = {"band_radius": "b", "kind": "dist"}.get(field, field)
        raise ConfigError(str(exc), field=field) from None


# -- serialization -------------------------------------------------------------


def fmt_float(x) -> str:
    """17 significant digits, so values round-trip exactly."""
    return format(float(x), ".17g")


def to_json(obj, indent=0) -> str:
    """JSON text with floats at 17 significant digits and non-finite values as null."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, (bool, np.bool_)) or obj is None:
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        return "[" + ", ".join(to_json(v, indent + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


class Artifacts:
    """Tracks files written during a run so a failure can remove them."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.created_dir = not self.dir.exists()
        self.files = []

    def write(self, name, text):
        self.dir.mkdir(parents=True, exist_ok=True)
        path = self.dir / name
        path.write_text(text)
        self.files.append(path)
        return path

    def csv(self, name, header, rows):
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(fmt_float(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
        return self.write(name, "\n".join(lines) + "\n")

    def json(self, name, obj):
        return self.write(name, to_json(obj) + "\n")

    def cleanup(self):
        for path in self.files:
            path.unlink(missing_ok=True)
        self.files = []
        if self.created_dir and self.dir.exists() and not any(self.dir.iterdir()):
            self.dir.rmdir()


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat()


# -- subcommands ---------------------------------------------------------------


def _phi(cfg, key="phi"):
    return parse_test_function(cfg[key] if cfg[key] is not None else cfg["phi"])


def _values_csv(art, values, name="values.csv"):
    art.csv(name, ("replicate", "value"), ((i, float(v)) for i, v in enumerate(values)))


def cmd_simulate(cfg, art):
    spec = ensemble_from_config(cfg)
    summary = run_linear_stat(McConfig(spec, _phi(cfg), cfg["reps"], cfg["workers"]))
    _values_csv(art, summary.values)
    art.json("summary.json", summary.to_dict())


def cmd_clt_check(cfg, art):
    spec = ensemble_from_config(cfg)
    summary = run_linear_stat(McConfig(spec, _phi(cfg), cfg["reps"], cfg["workers"]))
    diag = clt_diagnostics(summary.values)
    threshold = cfg["ks_threshold"]
    if threshold is None:
        threshold = calibrate_ks_threshold(summary.values.size, seed=cfg["seed"])
    _values_csv(art, summary.values)
    art.json("summary.json", summary.to_dict())
    art.json("clt.json", {
        "skew": diag.skew, "exkurt": diag.exkurt, "ks": diag.ks, "ks_pvalue": diag.ks_pvalue,
        "ks_threshold": threshold, "degenerate": diag.degenerate, "count": diag.count,
        "pass": diag.passes(threshold),
    })


def cmd_analytic_var(cfg, art):
    phi = _phi(cfg)
    kappa4 = cfg["kappa4"]
    if kappa4 is None:
        kappa4 = ensemble_from_config({**cfg, "n": cfg["n"] or 2, "b": cfg["b"] or 1}).kappa4
    report = var_band(phi, float(cfg["sigma"]), float(kappa4), cfg["nodes"])
    art.json("variance.json", report.to_dict())


def _gamma_rows(max_order):
    for k in range(max_order + 1):
        g = gamma_closed(k)
        yield k, g.numerator, g.denominator, float(g)


def cmd_gamma(cfg, art):
    art.csv("gamma.csv", ("k", "gamma_num", "gamma_den", "gamma_float"), _gamma_rows(cfg["max_order"]))


def cmd_moments(cfg, art):
    cmd_gamma(cfg, art)
    rows = []
    for l in range(cfg["max_order"] + 1):
        for m in range(cfg["max_order"] + 1):
            c = moment_coeff(l, m).value
            rows.append((l, m, c.numerator, c.denominator, float(c)))
    art.csv("moments.csv", ("l", "m", "c_num", "c_den", "c_float"), rows)


def cmd_bilinear(cfg, art):
    spec = ensemble_from_config(cfg)
    f, g = _phi(cfg, "f"), _phi(cfg, "g")
    res = empirical_bilinear(spec, f, g, max(cfg["reps"], 2), cfg["workers"])
    _values_csv(art, res.values)
    summary = summarize_values(res.values, spec.n, spec.band_radius, [f.to_spec(), g.to_spec()], res.failures)
    art.json("summary.json", {**summary.to_dict(), "mean": res.mean, "stderr": res.stderr,
                              "mean_ci_low": res.ci_low, "mean_ci_high": res.ci_high})


def cmd_empirical_a(cfg, art):
    spec = ensemble_from_config(cfg)
    phi = _phi(cfg)
    res = empirical_a(spec, phi, cfg["t_grid"], max(cfg["reps"], 2), cfg["workers"])
    rows = []
    for i, per_t in enumerate(res.per_replicate):
        for t, v in zip(res.t, per_t):
            rows.append((i, float(t), float(v.real), float(v.imag)))
    art.csv("values.csv", ("replicate", "t", "re", "im"), rows)
    art.json("summary.json", {"n": spec.n, "b": spec.band_radius, "phi": phi.to_spec(), **res.to_dict()})


def cmd_sweep(cfg, art):
    spec = ensemble_from_config(cfg)
    b_list = cfg["b_list"] or [spec.band_radius]
    base = McConfig(spec, _phi(cfg), max(cfg["reps"], 2), cfg["workers"])
    rows = sweep_band_scaling(base, b_list)
    art.csv("sweep.csv", ("b", "variance", "ci_low", "ci_high", "failures"),
            ((r.b, r.variance, r.ci_low, r.ci_high, r.failures) for r in rows))
    art.json("summary.json", {"n": spec.n, "phi": base.phi.to_spec(), "rows": [r.to_dict() for r in rows]})


def cmd_band_norm(cfg, art):
    if cfg["n"] is None:
        raise ConfigError("n is required for band-norm", field="n")
    b_list = cfg["b_list"] or ([cfg["b"]] if cfg["b"] is not None else [4, 16, 64, 256])
    try:
        res = banded_unitary_norm(cfg["n"], b_list, cfg["reps"], cfg["seed"])
    except InvalidSpecError as exc:
        raise ConfigError(str(exc), field="b_list") from None
    art.csv("band_norm.csv", ("b", "mean", "std"), ((r.band_radius, r.mean, r.std) for r in res))
    out = {"n": cfg["n"], "reps": cfg["reps"], "results": [r.to_dict() for r in res]}
    if len(res) >= 2:
        a, c, r2 = fit_log_trend([r.band_radius for r in res], [r.mean for r in res])
        out["fit"] = {"a": a, "c": c, "r_squared": r2}
    art.json("summary.json", out)


def cmd_resolvent(cfg, art):
    spec = ensemble_from_config(cfg)
    z = complex(*cfg["z"])
    art.json("resolvent.json", resolvent_offdiag_mean(spec, z, cfg["reps"]).to_dict())


COMMANDS = {
    "simulate": cmd_simulate,
    "analytic-var": cmd_analytic_var,
    "moments": cmd_moments,
    "gamma": cmd_gamma,
    "bilinear": cmd_bilinear,
    "empirical-a": cmd_empirical_a,
    "sweep": cmd_sweep,
    "band-norm": cmd_band_norm,
    "resolvent": cmd_resolvent,
    "clt-check": cmd_clt_check,
}


def dispatch(subcommand: str, cfg: dict, out_dir) -> int:
    """Run one subcommand with a resolved config; returns the exit status."""
    if subcommand not in COMMANDS:
        return _fail(ConfigError(f"unknown subcommand {subcommand!r}", field="subcommand"), None)
    art = Artifacts(out_dir)
    started = _now()
    try:
        COMMANDS[subcommand](cfg, art)
        digests = {p.name: sha256_file(p) for p in art.files}
        art.json("manifest.json", {
            "tool": "bandclt",
            "version": __version__,
            "subcommand": subcommand,
            "config": cfg,
            "seed": cfg["seed"],
            "started": started,
            "finished": _now(),
            "outputs": digests,
        })
    except BandCltError as exc:
        return _fail(exc, art)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError, OSError) as exc:
        return _fail(exc, art)
    return 0


def _fail(exc, art):
    if art is not None:
        art.cleanup()
    if isinstance(exc, BandCltError):
        payload = exc.to_dict()
    else:
        payload = {"type": type(exc).__name__, "message": str(exc)}
    print(json.dumps({"error": payload}), flush=True)
    return 2 if isinstance(exc, (ConfigError, InvalidSpecError)) else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="bandclt", description="Band random matrix CLT laboratory.")
    parser.add_argument("--version", action="version", version=f"bandclt {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", default=os.path.join("out", name), help="output directory")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--reps", type=int, help="replicates")
        p.add_argument("--max-order", type=int, dest="max_order", help="largest index for gamma/moments tables")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "workers": args.workers, "reps": args.reps, "max_order": args.max_order}
    try:
        cfg = parse_config(args.config, overrides)
    except BandCltError as exc:
        return _fail(exc, None)
    return dispatch(args.subcommand, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
