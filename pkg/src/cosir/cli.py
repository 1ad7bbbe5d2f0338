"""Batch front-end: bind a JSON config to one analysis command.

Numerics live in the config file (19+ rate constants are untenable as
flags, and configs double as archivable experiment records); flags carry
only the command, the paths and verbosity.  Exit codes: 0 success,
2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .bifurcation import (
    BracketError,
    sweep_K,
    verification_to_json,
    verify_bifurcation,
    write_sweep_csv,
)
from .equilibria import closed_form_equilibria, equilibria_to_json, find_G5
from .integrators import IntegratorConfig, StiffnessError, integrate, write_trajectory_csv
from .lyapunov import DomainError, monitor_descent, write_descent_csv
from .model import ParameterError, UsageError, load_parameters
from .stability import classify_local, report_to_dict

COMMANDS = ("simulate", "equilibria", "stability", "lyapunov", "sweep", "bifurcate")

CONFIG_SCHEMA = """\
config file layout (JSON):

  {
    "params": {            # required; exact field names, unknown keys rejected
      "b": .., "K": .., "mu0": .., "mu1": .., "mu2": .., "mu3": ..,
      "rho1": .., "rho2": .., "rho3": .., "mu4p": ..,
      "alpha1": .., "alpha2": .., "alpha3": .., "beta1": .., "beta2": ..,
      "gamma1": .., "gamma2": .., "eta1": .., "eta2": ..,
      "full": {"b2": .., "b3": .., "b4": .., "b5": ..,         # optional
               "K1": .., "K2": .., "K3": .., "K4": .., "K5": ..}
    },
    "<command>": { ... }   # exactly the block for the chosen command
  }

command blocks (defaults in parentheses):

  simulate:   y0 (list of 5), t_end; rel_tol (1e-8), abs_tol (1e-10),
              h_init (1e-3), h_min (1e-12), h_max (5.0), method ("dopri45"),
              stop_at_steady (false), output_stride (1)
  equilibria: find_g5 (true), grid_density (8), seeds (list of 4-lists)
  stability:  targets (["G1","G2","G3","G4"]); "G5" classifies found roots
  lyapunov:   y_star ("G2" | "G3" | "G4" | list of 4), y0, t_end;
              rel_tol, abs_tol, h_max as in simulate
  sweep:      k_min, k_max, n; verify_by_simulation (false), rng_seed
              (required when verifying), refine (true), find_g5 ("auto")
  bifurcate:  d_values (list of negative det-B targets),
              smallness_tol (0.01)

outputs: simulate/lyapunov/sweep write CSV; equilibria/stability/bifurcate
write JSON.  All numbers are emitted with full round-trip precision.
"""


class ConfigError(ValueError):
    pass


def _check_keys(block: dict, allowed: set[str], where: str):
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _need(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"missing key {key!r} in {where}")
    return block[key]


def _build_integrator_config(block: dict, where: str, defaults: dict | None = None) -> IntegratorConfig:
    opts = dict(defaults or {})
    for key in ("t_end", "rel_tol", "abs_tol", "h_init", "h_min", "h_max",
                "positivity_floor", "method", "stop_at_steady"):
        if key in block:
            opts[key] = block[key]
    if "t_end" not in opts:
        raise ConfigError(f"missing key 't_end' in {where}")
    try:
        return IntegratorConfig(**opts)
    except UsageError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _y0_from(block: dict, where: str) -> np.ndarray:
    y0 = _need(block, "y0", where)
    if not isinstance(y0, list) or len(y0) != 5:
        raise ConfigError(f"{where}: y0 must be a list of 5 densities")
    return np.asarray(y0, dtype=float)


def run(command: str, config_path: str, output_path: str, verbose: bool = False) -> int:
    """Execute one command; returns the process exit status."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2

    try:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys(doc, {"params", command}, "config")
        params = load_parameters(_need(doc, "params", "config"))
        block = _need(doc, command, "config")
        if not isinstance(block, dict):
            raise ConfigError(f"{command} block must be an object")
        summary = _dispatch(command, params, block, output_path, verbose)
    except (ConfigError, ParameterError, UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 2
    except (StiffnessError, BracketError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3

    print(summary)
    return 0


def _dispatch(command, params, block, output_path, verbose) -> str:
    if command == "simulate":
        return _cmd_simulate(params, block, output_path)
    if command == "equilibria":
        return _cmd_equilibria(params, block, output_path)
    if command == "stability":
        return _cmd_stability(params, block, output_path)
    if command == "lyapunov":
        return _cmd_lyapunov(params, block, output_path)
    if command == "sweep":
        return _cmd_sweep(params, block, output_path, verbose)
    if command == "bifurcate":
        return _cmd_bifurcate(params, block, output_path)
    raise ConfigError(f"unknown command {command!r}")


def _base(params):
    return getattr(params, "base", params)


def _cmd_simulate(params, block, output_path) -> str:
    _check_keys(block, {"y0", "t_end", "rel_tol", "abs_tol", "h_init", "h_min",
                        "h_max", "positivity_floor", "method", "stop_at_steady",
                        "output_stride"}, "simulate block")
    y0 = _y0_from(block, "simulate block")
    cfg = _build_integrator_config(block, "simulate block")
    stride = block.get("output_stride", 1)
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError("simulate block: output_stride must be an integer >= 1")
    traj = integrate(params, y0, cfg)
    write_trajectory_csv(traj, output_path, stride=stride)

    final = traj.y[-1, :4]
    best_kind, best_dist = "none", math.inf
    for eq in closed_form_equilibria(_base(params)):
        if not (eq.exists or eq.kind in ("G1", "G2")):
            continue
        dist = float(np.abs(final - eq.y).max())
        if dist < best_dist:
            best_kind, best_dist = eq.kind, dist
    if best_dist <= 1e-3:
        return f"converged: {best_kind} (dist={best_dist:.3e}, t={traj.t[-1]:.6g})"
    return f"no convergence detected (nearest {best_kind}, dist={best_dist:.3e})"


def _cmd_equilibria(params, block, output_path) -> str:
    _check_keys(block, {"find_g5", "grid_density", "seeds"}, "equilibria block")
    base = _base(params)
    records = closed_form_equilibria(base)
    n_g5 = 0
    if block.get("find_g5", True):
        seeds = block.get("seeds")
        if seeds is not None and (
            not isinstance(seeds, list) or any(len(s) != 4 for s in seeds)
        ):
            raise ConfigError("equilibria block: seeds must be a list of 4-lists")
        g5 = find_G5(base, seeds=seeds, grid_density=block.get("grid_density", 8))
        records = records + g5
        n_g5 = len(g5)
    with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(equilibria_to_json(records) + "\n")
    existing = " ".join(e.kind for e in records if e.exists and e.kind != "G1")
    return f"equilibria: {existing or 'G1 only'}; coexistence roots found: {n_g5}"


def _cmd_stability(params, block, output_path) -> str:
    _check_keys(block, {"targets"}, "stability block")
    base = _base(params)
    targets = block.get("targets", ["G1", "G2", "G3", "G4"])
    if not isinstance(targets, list) or not targets:
        raise ConfigError("stability block: targets must be a nonempty list")
    closed = {e.kind: e for e in closed_form_equilibria(base)}
    reports = []
    for kind in targets:
        if kind == "G5":
            for g5 in find_G5(base):
                reports.append(classify_local(base, g5))
        elif kind in closed:
            reports.append(classify_local(base, closed[kind]))
        else:
            raise ConfigError(f"stability block: unknown target {kind!r}")
    with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps([report_to_dict(r) for r in reports], indent=2) + "\n")
    stable = [r.kind for r in reports if r.local_stable]
    if len(stable) == 1:
        return f"stable: {stable[0]} at K={base.K:.3f}"
    if not stable:
        return f"stable: none at K={base.K:.3f}"
    return f"stable: multiple ({', '.join(stable)}) at K={base.K:.3f}"


def _cmd_lyapunov(params, block, output_path) -> str:
    _check_keys(block, {"y_star", "y0", "t_end", "rel_tol", "abs_tol", "h_init",
                        "h_min", "h_max", "method", "stop_at_steady"}, "lyapunov block")
    base = _base(params)
    y_star = _need(block, "y_star", "lyapunov block")
    if isinstance(y_star, str):
        closed = {e.kind: e for e in closed_form_equilibria(base)}
        if y_star not in closed:
            raise ConfigError(f"lyapunov block: unknown y_star {y_star!r}")
        ref = closed[y_star]
    elif isinstance(y_star, list) and len(y_star) == 4:
        ref = np.asarray(y_star, dtype=float)
    else:
        raise ConfigError("lyapunov block: y_star must be a kind name or a list of 4")
    y0 = _y0_from(block, "lyapunov block")
    cfg = _build_integrator_config(block, "lyapunov block")
    traj = integrate(base, y0, cfg)
    report = monitor_descent(base, ref, traj)
    write_descent_csv(report, output_path)
    note = "" if report.truncated_at is None else f", truncated at sample {report.truncated_at}"
    return f"descent: max v_dot = {report.max_v_dot:.3e} (fd gap {report.max_fd_gap_rel:.3e}{note})"


def _cmd_sweep(params, block, output_path, verbose) -> str:
    _check_keys(block, {"k_min", "k_max", "n", "verify_by_simulation", "rng_seed",
                        "refine", "find_g5", "grid_density"}, "sweep block")
    base = _base(params)
    verify = bool(block.get("verify_by_simulation", False))
    rng_seed = block.get("rng_seed")
    if verify and rng_seed is None:
        raise ConfigError("sweep block: rng_seed is mandatory when verify_by_simulation is on")
    result = sweep_K(
        base,
        k_min=_need(block, "k_min", "sweep block"),
        k_max=_need(block, "k_max", "sweep block"),
        n=_need(block, "n", "sweep block"),
        verify_by_simulation=verify,
        rng_seed=rng_seed,
        refine=bool(block.get("refine", True)),
        find_g5=block.get("find_g5", "auto"),
        grid_density=block.get("grid_density", 5),
    )
    write_sweep_csv(result, output_path)
    if verbose:
        for rec in result.records:
            print(f"  K={rec.K:.6g}: {rec.stable_kind}")
    if result.transitions:
        parts = ", ".join(
            f"{t['kind_lo']}->{t['kind_hi']} at K={t['k_mid']:.6f}" for t in result.transitions
        )
        return f"transitions: {parts}"
    kinds = {r.stable_kind for r in result.records}
    return f"no transitions; stable kind(s): {', '.join(sorted(kinds))}"


def _cmd_bifurcate(params, block, output_path) -> str:
    _check_keys(block, {"d_values", "smallness_tol"}, "bifurcate block")
    base = _base(params)
    d_values = _need(block, "d_values", "bifurcate block")
    if not isinstance(d_values, list) or not d_values:
        raise ConfigError("bifurcate block: d_values must be a nonempty list")
    ver = verify_bifurcation(
        base, d_values, smallness_tol=block.get("smallness_tol", 1e-2)
    )
    with open(output_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(verification_to_json(ver) + "\n")
    n_found = sum(1 for e in ver.entries if e["found"])
    return (
        f"bifurcation check: {n_found}/{len(ver.entries)} targets located, "
        f"slope c={ver.c_fit:.6g} (closed form {ver.c_closed_ref:.6g})"
    )


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cosir",
        description="Coinfection SIR laboratory: simulate, classify and sweep "
        "the two-strain model defined by a JSON config.",
        epilog=CONFIG_SCHEMA,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("config", help="path to the JSON config file")
    parser.add_argument("output", help="path of the CSV/JSON artifact to write")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.output, verbose=args.verbose)


if __name__ == "__main__":
    sys.exit(main())
