"""Command-line front end: JSON config in, deterministic CSV + manifest out.

Invocation: ``ptlab <command> --config <path> [--out <dir>]`` with commands
transmission, spectrum, pte-scan, track, ep-locate, inverse.  One config
document drives one run; outputs are CSV files with fixed column schemas, a
structured events/report JSON where applicable, and a ``manifest.json``
echoing the config, the tolerances in effect, and the outcome.  Floats are
written with 17 significant digits, which makes byte-identical reruns a
testable property.

Exit codes: 0 success (including benign outcomes such as an all-pass scan or
a truncated measurement curve), 1 configuration error, 2 numerical failure
(partial outputs are kept and the failure is recorded in the manifest).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError, PtlabError
from .inverse import BranchSelector, reconstruct_branch, simulate_kappa
from .potential import PotentialSpec, StepFamilySpec, make_square_well, make_steps
from .pte import DEFAULT_SCAN_STEP, VERIFY_TOL, find_ptes, track_ptes
from .spectrum import (
    CONTOUR_PANELS,
    ROOT_TOL,
    ComplexBox,
    label_branches_at_zero,
    locate_exceptional_point,
    _newton_root,
)
from .transfer import transmission_curve

COMMANDS = ("transmission", "spectrum", "pte-scan", "track", "ep-locate", "inverse")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    """A fully validated run: command, resolved potential, parameters."""

    command: str
    potential: PotentialSpec
    params: dict[str, Any]
    raw: dict[str, Any]


class _Validator:
    """Schema walker collecting human-readable diagnostics with field paths."""

    def __init__(self):
        self.diagnostics: list[str] = []

    def fail(self, path: str, message: str):
        self.diagnostics.append(f"{path}: {message}")

    def require(self, doc: dict, path: str, key: str, kind, predicate=None,
                describe: str = "", default=None, required: bool = True):
        if key not in doc:
            if required:
                self.fail(f"{path}.{key}", "missing required field")
            return default
        value = doc[key]
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or isinstance(value, bool):
            self.fail(f"{path}.{key}", f"expected {kind.__name__}")
            return default
        if predicate is not None and not predicate(value):
            self.fail(f"{path}.{key}", describe or "invalid value")
            return default
        return value

    def reject_unknown(self, doc: dict, path: str, allowed: set[str]):
        for key in doc:
            if key not in allowed:
                self.fail(f"{path}.{key}", "unknown field (strict mode)")


def _parse_potential(doc: Any, v: _Validator) -> PotentialSpec | None:
    if not isinstance(doc, dict):
        v.fail("potential", "expected an object")
        return None
    kind = v.require(doc, "potential", "type", str,
                     lambda s: s in ("square_well", "steps"),
                     "must be 'square_well' or 'steps'")
    if kind == "square_well":
        v.reject_unknown(doc, "potential", {"type", "a", "depth"})
        a = v.require(doc, "potential", "a", float, lambda x: x > 0, "must be positive")
        depth = v.require(doc, "potential", "depth", float)
        if v.diagnostics:
            return None
        return make_square_well(a, depth)
    if kind == "steps":
        v.reject_unknown(doc, "potential", {"type", "a", "eps", "beta"})
        a = v.require(doc, "potential", "a", float, lambda x: x > 0, "must be positive")
        eps = v.require(doc, "potential", "eps", list)
        beta = v.require(doc, "potential", "beta", list)
        if eps is not None and beta is not None and len(eps) != len(beta):
            v.fail("potential.eps", f"length {len(eps)} does not match "
                                    f"potential.beta length {len(beta)}")
        if eps is not None:
            for i, e in enumerate(eps):
                if not isinstance(e, (int, float)) or isinstance(e, bool) or e <= 0:
                    v.fail(f"potential.eps[{i}]", "must be a positive number")
        if beta is not None:
            for i, b in enumerate(beta):
                if not isinstance(b, (int, float)) or isinstance(b, bool):
                    v.fail(f"potential.beta[{i}]", "must be a number")
        if v.diagnostics:
            return None
        try:
            return make_steps(StepFamilySpec(a, tuple(map(float, eps)),
                                             tuple(map(float, beta))))
        except PtlabError as exc:
            v.fail("potential", str(exc))
            return None
    return None


def _grid_fields(doc: dict, path: str, v: _Validator, lo_key: str, hi_key: str,
                 step_key: str, positive_lo: bool = False):
    lo = v.require(doc, path, lo_key, float)
    hi = v.require(doc, path, hi_key, float)
    step = v.require(doc, path, step_key, float, lambda x: x > 0, "must be positive")
    if lo is not None and positive_lo and lo <= 0:
        v.fail(f"{path}.{lo_key}", "must be positive")
    if lo is not None and hi is not None and hi <= lo:
        v.fail(f"{path}.{hi_key}", f"must exceed {path}.{lo_key} (monotone grid)")
    return lo, hi, step


_PARAM_KEYS = {
    "transmission": {"k2_min", "k2_max", "k2_step"},
    "spectrum": {"alpha_max", "alpha_step", "im_cap", "max_count", "box"},
    "pte-scan": {"k_min", "k_max", "scan_step"},
    "track": {"vary_index", "theta_min", "theta_max", "theta_step",
              "k_min", "k_max", "scan_step"},
    "ep-locate": {"vary_index", "bracket", "mu_guess", "mu_window", "alpha"},
    "inverse": {"seed_mu_min", "seed_mu_max", "v0_min", "v0_max", "v0_step",
                "alpha_min", "alpha_max", "alpha_points"},
}


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Validate a JSON config document into a RunConfig.

    Unknown fields are rejected (silent typos in eps/beta lists would
    otherwise change physics).  All problems are collected and raised
    together as ConfigError with field paths; JSON syntax errors carry
    line/column positions.
    """
    v = _Validator()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"line {exc.lineno} col {exc.colno}: {exc.msg}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected an object"])

    v.reject_unknown(doc, "config", {"command", "potential", "params"})
    declared = v.require(doc, "config", "command", str,
                         lambda s: s in COMMANDS,
                         f"must be one of {', '.join(COMMANDS)}",
                         required=command is None)
    if command is not None and declared is not None and declared != command:
        v.fail("config.command", f"declares '{declared}' but the CLI invoked '{command}'")
    cmd = command or declared
    potential = None
    if "potential" not in doc:
        v.fail("potential", "missing required field")
    else:
        potential = _parse_potential(doc["potential"], v)
    params_doc = doc.get("params", {})
    if not isinstance(params_doc, dict):
        v.fail("params", "expected an object")
        params_doc = {}
    params: dict[str, Any] = {}

    if cmd in _PARAM_KEYS:
        v.reject_unknown(params_doc, "params", _PARAM_KEYS[cmd])
    if cmd == "transmission":
        lo, hi, step = _grid_fields(params_doc, "params", v, "k2_min", "k2_max",
                                    "k2_step", positive_lo=True)
        params = {"k2_min": lo, "k2_max": hi, "k2_step": step}
    elif cmd == "spectrum":
        params["alpha_max"] = v.require(params_doc, "params", "alpha_max", float,
                                        lambda x: x > 0, "must be positive")
        params["alpha_step"] = v.require(params_doc, "params", "alpha_step", float,
                                         lambda x: x > 0, "must be positive")
        params["im_cap"] = v.require(params_doc, "params", "im_cap", float,
                                     lambda x: x > 0, "must be positive",
                                     default=500.0, required=False)
        params["max_count"] = v.require(params_doc, "params", "max_count", int,
                                        lambda x: x >= 1, "must be >= 1",
                                        default=64, required=False)
        box = params_doc.get("box")
        if box is not None:
            if not isinstance(box, dict):
                v.fail("params.box", "expected an object")
            else:
                v.reject_unknown(box, "params.box",
                                 {"re_min", "re_max", "im_min", "im_max"})
                vals = [v.require(box, "params.box", k, float)
                        for k in ("re_min", "re_max", "im_min", "im_max")]
                if None not in vals:
                    if vals[1] <= vals[0] or vals[3] <= vals[2]:
                        v.fail("params.box", "must have positive area")
                    params["box"] = tuple(vals)
    elif cmd == "pte-scan":
        lo, hi, step = _grid_fields(
            params_doc, "params", v, "k_min", "k_max", "scan_step",
            positive_lo=True) if "scan_step" in params_doc else (
            v.require(params_doc, "params", "k_min", float, lambda x: x > 0,
                      "must be positive"),
            v.require(params_doc, "params", "k_max", float),
            DEFAULT_SCAN_STEP)
        if lo is not None and hi is not None and hi <= lo:
            v.fail("params.k_max", "must exceed params.k_min (monotone grid)")
        params = {"k_min": lo, "k_max": hi, "scan_step": step}
    elif cmd == "track":
        params["vary_index"] = v.require(params_doc, "params", "vary_index", int,
                                         lambda x: x >= 0, "must be >= 0")
        t_lo = v.require(params_doc, "params", "theta_min", float)
        t_hi = v.require(params_doc, "params", "theta_max", float)
        t_step = v.require(params_doc, "params", "theta_step", float,
                           lambda x: x > 0, "must be positive")
        if t_lo is not None and t_hi is not None and t_hi == t_lo:
            v.fail("params.theta_max", "must differ from params.theta_min")
        params.update(theta_min=t_lo, theta_max=t_hi, theta_step=t_step)
        params["k_min"] = v.require(params_doc, "params", "k_min", float,
                                    lambda x: x > 0, "must be positive")
        params["k_max"] = v.require(params_doc, "params", "k_max", float)
        if params["k_min"] is not None and params["k_max"] is not None \
                and params["k_max"] <= params["k_min"]:
            v.fail("params.k_max", "must exceed params.k_min")
        params["scan_step"] = v.require(params_doc, "params", "scan_step", float,
                                        lambda x: x > 0, "must be positive",
                                        default=DEFAULT_SCAN_STEP, required=False)
    elif cmd == "ep-locate":
        params["vary_index"] = v.require(params_doc, "params", "vary_index", int,
                                         lambda x: x >= 0, "must be >= 0")
        bracket = params_doc.get("bracket")
        if not (isinstance(bracket, list) and len(bracket) == 2
                and all(isinstance(b, (int, float)) and not isinstance(b, bool)
                        for b in bracket)):
            v.fail("params.bracket", "expected [theta_lo, theta_hi]")
        else:
            params["bracket"] = (float(bracket[0]), float(bracket[1]))
        params["mu_guess"] = v.require(params_doc, "params", "mu_guess", float)
        params["mu_window"] = v.require(params_doc, "params", "mu_window", float,
                                        lambda x: x > 0, "must be positive",
                                        default=None, required=False)
        params["alpha"] = v.require(params_doc, "params", "alpha", float,
                                    default=None, required=False)
    elif cmd == "inverse":
        params["seed_mu_min"] = v.require(params_doc, "params", "seed_mu_min", float)
        params["seed_mu_max"] = v.require(params_doc, "params", "seed_mu_max", float)
        if params["seed_mu_min"] is not None and params["seed_mu_max"] is not None \
                and params["seed_mu_max"] <= params["seed_mu_min"]:
            v.fail("params.seed_mu_max", "must exceed params.seed_mu_min")
        lo, hi, step = _grid_fields(params_doc, "params", v, "v0_min", "v0_max",
                                    "v0_step")
        params.update(v0_min=lo, v0_max=hi, v0_step=step)
        params["alpha_min"] = v.require(params_doc, "params", "alpha_min", float)
        params["alpha_max"] = v.require(params_doc, "params", "alpha_max", float)
        if params["alpha_min"] is not None and params["alpha_max"] is not None \
                and params["alpha_max"] <= params["alpha_min"]:
            v.fail("params.alpha_max", "must exceed params.alpha_min")
        params["alpha_points"] = v.require(params_doc, "params", "alpha_points", int,
                                           lambda x: x >= 2, "must be >= 2")

    if v.diagnostics:
        raise ConfigError(v.diagnostics)
    assert potential is not None and cmd is not None
    return RunConfig(command=cmd, potential=potential, params=params, raw=doc)


def _threads() -> int:
    raw = os.environ.get("PTLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError([f"PTLAB_THREADS: expected an integer, got {raw!r}"]) from exc
    if n < 0:
        raise ConfigError(["PTLAB_THREADS: must be >= 0 (0 = auto)"])
    return n if n > 0 else (os.cpu_count() or 1)


def _write_csv(path: Path, header: str, rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(c) if isinstance(c, str) else _fmt(c)
                              for c in row) + "\n")


def execute(config: RunConfig, out_dir: str | Path = ".") -> int:
    """Run one validated config; writes outputs and manifest, returns exit code."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError([f"out: directory {out} is not writable"])
    started = time.time()
    manifest: dict[str, Any] = {
        "config": config.raw,
        "command": config.command,
        "version": __version__,
        "threads": _threads(),
        "potential_segments": [
            {"x_lo": s.x_lo, "x_hi": s.x_hi, "value": s.value}
            for s in config.potential.segments
        ],
        "tolerances": {
            "root_residual": ROOT_TOL,
            "reflection_verify": VERIFY_TOL,
            "contour_panels_per_edge": CONTOUR_PANELS,
            "csv_significant_digits": 17,
        },
        "outputs": [],
        "outcome": {"status": "ok", "notes": []},
    }
    status = 0
    try:
        _dispatch(config, out, manifest)
    except NumericalError as exc:
        manifest["outcome"]["status"] = "numerical-failure"
        manifest["outcome"]["notes"].append(str(exc))
        status = 2
    manifest["wall_time_s"] = time.time() - started
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def _note_output(manifest: dict, path: Path) -> None:
    manifest["outputs"].append(path.name)


def _dispatch(config: RunConfig, out: Path, manifest: dict) -> None:
    p = config.potential
    params = config.params
    notes = manifest["outcome"]["notes"]

    if config.command == "transmission":
        n = int(math.floor((params["k2_max"] - params["k2_min"]) / params["k2_step"])) + 1
        grid = [params["k2_min"] + i * params["k2_step"] for i in range(n)]
        rows = transmission_curve(p, grid)
        path = out / "transmission.csv"
        _write_csv(path, "k2,T2,R2,argT", rows)
        _note_output(manifest, path)

    elif config.command == "spectrum":
        box = params.get("box")
        if box is None:
            cap = params["alpha_max"] ** 2 + 1.0
            box = (p.min_value - 1.0, max(cap, p.min_value + 2.0),
                   -params["im_cap"], params["im_cap"])
        branches = label_branches_at_zero(
            p, params["alpha_max"], params["alpha_step"],
            ComplexBox(*box), max_count=params["max_count"])
        for br in branches:
            path = out / f"branch_{br.label:02d}.csv"
            _write_csv(path, "alpha,re_mu,im_mu,residual",
                       [(s.alpha, s.mu.real, s.mu.imag, s.residual)
                        for s in br.samples])
            _note_output(manifest, path)
            if br.collision is not None:
                notes.append(
                    f"branch {br.label}: root collision near alpha="
                    f"{br.collision.alpha:.6g} (exceptional-point candidate)")

    elif config.command == "pte-scan":
        res = find_ptes(p, (params["k_min"], params["k_max"]), params["scan_step"])
        path = out / "ptes.csv"
        _write_csv(path, "k_star,mu_star,branch,residual_secular,residual_reflection",
                   [(r.k_star, r.mu_star,
                     "" if r.branch is None else str(r.branch),
                     r.residual_secular, r.residual_reflection)
                    for r in res.records])
        _note_output(manifest, path)
        manifest["outcome"]["all_pass"] = res.all_pass
        if res.all_pass:
            notes.append("all-pass: every scanned energy transmits perfectly; "
                         "no discrete perfect-transmission set exists")

    elif config.command == "track":
        idx = params["vary_index"]
        base = config.raw["potential"]
        eps = tuple(float(e) for e in base["eps"])
        beta = [float(b) for b in base["beta"]]
        if idx >= len(beta):
            raise ConfigError([f"params.vary_index: {idx} out of range for "
                               f"beta of length {len(beta)}"])
        a = float(base["a"])

        def family(theta: float) -> PotentialSpec:
            bb = list(beta)
            bb[idx] = theta
            return make_steps(StepFamilySpec(a, eps, tuple(bb)))

        sign = 1.0 if params["theta_max"] > params["theta_min"] else -1.0
        n = int(math.floor(abs(params["theta_max"] - params["theta_min"])
                           / params["theta_step"])) + 1
        thetas = [params["theta_min"] + sign * i * params["theta_step"] for i in range(n)]
        threads = manifest["threads"]
        track = _tracked(family, thetas, (params["k_min"], params["k_max"]),
                         params["scan_step"], threads)
        path = out / "track.csv"
        rows: list[tuple] = []
        for theta, recs in zip(track.thetas, track.records):
            for r in recs:
                rows.append((theta, r.mu_star, r.k_star,
                             "" if r.branch is None else str(r.branch), ""))
        for ev in track.events:
            rows.append((ev.theta, ev.mu_star, "", "", ev.kind))
        for ev in track.boundary_exits:
            rows.append((ev.theta, ev.mu_star, "", "", ev.kind))
        _write_csv(path, "theta,mu_star,k_star,branch,event", rows)
        _note_output(manifest, path)
        epath = out / "events.json"
        with open(epath, "w") as fh:
            json.dump([{"theta": ev.theta, "mu_star": ev.mu_star, "kind": ev.kind}
                       for ev in track.events + track.boundary_exits],
                      fh, indent=2)
            fh.write("\n")
        _note_output(manifest, epath)
        notes.extend(track.warnings)

    elif config.command == "ep-locate":
        idx = params["vary_index"]
        base = config.raw["potential"]
        eps = tuple(float(e) for e in base["eps"])
        beta = [float(b) for b in base["beta"]]
        if idx >= len(beta):
            raise ConfigError([f"params.vary_index: {idx} out of range for "
                               f"beta of length {len(beta)}"])
        a = float(base["a"])

        def family(theta: float) -> PotentialSpec:
            bb = list(beta)
            bb[idx] = theta
            return make_steps(StepFamilySpec(a, eps, tuple(bb)))

        coupling = "dispersion" if params["alpha"] is None else params["alpha"]
        ep = locate_exceptional_point(family, coupling, params["bracket"],
                                      params["mu_guess"],
                                      mu_window=params["mu_window"])
        path = out / "ep.json"
        with open(path, "w") as fh:
            json.dump({"theta": ep.theta, "re_mu": ep.mu.real, "im_mu": ep.mu.imag,
                       "residual_F": ep.residual_f, "residual_dF": ep.residual_df},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        _note_output(manifest, path)

    elif config.command == "inverse":
        selector = BranchSelector(seed_window=(params["seed_mu_min"],
                                               params["seed_mu_max"]))
        n = int(math.floor((params["v0_max"] - params["v0_min"]) / params["v0_step"])) + 1
        grid = [params["v0_min"] + i * params["v0_step"] for i in range(n)]
        curve = simulate_kappa(p, selector, grid)
        path = out / "kappa.csv"
        _write_csv(path, "v0,kappa", [(s.v0, s.kappa) for s in curve.samples])
        _note_output(manifest, path)
        if curve.truncated_at is not None:
            notes.append(f"measurement curve truncated at v0={curve.truncated_at}: "
                         f"{curve.truncation_reason}")
        manifest["outcome"]["kappa_monotone"] = curve.monotone
        manifest["outcome"]["kappa_min_slope"] = curve.min_slope

        alphas = np.linspace(params["alpha_min"], params["alpha_max"],
                             params["alpha_points"])
        rec = reconstruct_branch(curve, alphas)
        rows = [(s.alpha, s.mu.real, s.mu.imag, "reconstructed")
                for s in rec.branch.samples]
        for s in rec.branch.samples:
            got = _newton_root(p, s.alpha, s.mu)
            if got is not None:
                rows.append((s.alpha, got[0].real, got[0].imag, "direct"))
        path = out / "reconstruction.csv"
        _write_csv(path, "alpha,re_mu,im_mu,source", rows)
        _note_output(manifest, path)
        for alpha, reason in rec.skipped:
            notes.append(f"alpha={alpha:g} skipped: {reason}")

    else:  # pragma: no cover - guarded by parse_config
        raise AssertionError(f"unhandled command {config.command}")


def _tracked(family, thetas, k_range, scan_step, threads):
    """track_ptes with the per-theta scans optionally spread over a thread pool."""
    if threads <= 1:
        return track_ptes(family, thetas, k_range, scan_step)
    from .pte import PTETrack, _match_step

    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(lambda t: find_ptes(family(t), k_range, scan_step),
                                thetas))
    track = PTETrack(parameter="theta", thetas=list(thetas),
                     records=[list(r.records) for r in results])
    for i in range(len(thetas) - 1):
        _match_step(family, track, i, k_range, scan_step)
    return track


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ptlab",
        description="Perfect-transmission scattering as a Robin spectral problem: "
                    "spectra, transmission curves, PTE tracking, exceptional "
                    "points, and inverse reconstruction.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON config document")
        cmd.add_argument("--out", default=".", help="output directory")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 1
    try:
        config = parse_config(text, command=args.command)
        return execute(config, args.out)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"config error: {diag}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
