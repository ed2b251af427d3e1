"""Command-line entry point.

Every command reads an optional JSON config and writes CSV or JSON files
into ``--out``.  CSV files start with a ``#`` provenance line carrying the
config hash and package version.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .entangle import entanglement_region_scan
from .errors import ConfigError, DephasingError, NumericalFailure, VerificationFailure
from .exact import PhiTensor, check_density_matrix, evolve, rho_from_json
from .model import ModelSpec, bipartite_gamma, model_from_json, qubit_model, ring_model, RingCouplingParams
from .operational import (
    MeasurementScheme,
    cpf_correlation,
    joint_probability,
    qubit_direction_projectors,
)
from .split import EnvPopulations, ReducedDynamics, SplitSpec, compose_state, system_state
from .witness import canonical_from_log_rate

log = logging.getLogger("multideph")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# config


@dataclass
class RunConfig:
    model: Optional[ModelSpec]
    split: Optional[SplitSpec]
    env: Optional[EnvPopulations]
    rho0_s: Optional[np.ndarray]
    rho0: Optional[np.ndarray]
    times: np.ndarray
    taus: Optional[np.ndarray]
    scheme: Optional[MeasurementScheme]
    seed: int
    raw: dict


def _grid(doc, path):
    try:
        start, end, steps = float(doc["t_start"]), float(doc["t_end"]), int(doc["steps"])
    except KeyError as e:
        raise ConfigError(f"{path}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: t_start, t_end must be numbers and steps an integer") from None
    if steps < 2:
        raise ConfigError(f"{path}.steps: need at least 2 grid points, got {steps}")
    if start < 0 or end < start:
        raise ConfigError(f"{path}: need 0 <= t_start <= t_end")
    return np.linspace(start, end, steps)


def _matrix(doc, path):
    try:
        m = rho_from_json(doc)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: expected rows of [re, im] pairs") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{path}: expected a square matrix")
    return m


def _qubit_stage(doc, path):
    if doc == "x":
        return qubit_direction_projectors(0.0)
    if doc == "y":
        return qubit_direction_projectors(math.pi / 2)
    if doc == "z":
        return np.array([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]).astype(complex)
    if isinstance(doc, dict) and "plane_angle" in doc:
        return qubit_direction_projectors(float(doc["plane_angle"]))
    if isinstance(doc, list):
        return np.array([_matrix(m, f"{path}[{k}]") for k, m in enumerate(doc)])
    raise ConfigError(f"{path}: expected 'x', 'y', 'z', {{plane_angle}} or a list of matrices")


def parse_scheme(doc, path="$.scheme") -> MeasurementScheme:
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object")
    stages = {}
    for name in ("first", "intermediate", "last"):
        if name not in doc:
            raise ConfigError(f"{path}: missing key {name!r}")
        stages[name] = _qubit_stage(doc[name], f"{path}.{name}")
    values = doc.get("values", {})
    try:
        return MeasurementScheme(stages["first"], stages["intermediate"], stages["last"],
                                 values.get("first"), values.get("intermediate"), values.get("last")).validate()
    except DephasingError as e:
        raise ConfigError(f"{path}: {e}") from None


def parse_env(doc, bath_dims, path="$.env") -> EnvPopulations:
    try:
        if doc is None or doc == "uniform":
            return EnvPopulations.uniform(bath_dims)
        if "product" in doc:
            return EnvPopulations(product=tuple(doc["product"])).check(bath_dims)
        if "populations" in doc:
            return EnvPopulations(full=doc["populations"]).check(bath_dims)
        if "state" in doc:
            return EnvPopulations.from_state(_matrix(doc["state"], f"{path}.state")).check(bath_dims)
    except DephasingError as e:
        raise ConfigError(f"{path}: {e}") from None
    raise ConfigError(f"{path}: expected 'uniform' or one of product, populations, state")


def parse_state(doc, d, path):
    if doc == "plus":
        return np.full((d, d), 1.0 / d, dtype=complex)
    if doc == "mixed":
        return np.eye(d, dtype=complex) / d
    m = _matrix(doc, path)
    if m.shape != (d, d):
        raise ConfigError(f"{path}: expected a {d}x{d} matrix, got {m.shape}")
    try:
        return check_density_matrix(m)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def load_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("$: config must be a JSON object")
    model = model_from_json(doc["model"], "$.model") if "model" in doc else None
    split = env = rho0_s = rho0 = scheme = None
    if model is not None:
        sd = doc.get("split", {"system": [1], "bath": list(range(2, model.n + 1))})
        try:
            split = SplitSpec.from_one_based(sd["system"], sd["bath"]).validate(model.n)
        except KeyError as e:
            raise ConfigError(f"$.split: missing key {e.args[0]!r}") from None
        except DephasingError as e:
            raise ConfigError(f"$.split: {e}") from None
        env = parse_env(doc.get("env"), split.bath_dims(model))
        ds = int(np.prod(split.system_dims(model)))
        rho0_s = parse_state(doc.get("rho0_s", "plus"), ds, "$.rho0_s")
        if "rho0" in doc:
            rho0 = parse_state(doc["rho0"], model.dimension, "$.rho0")
    if "scheme" in doc:
        scheme = parse_scheme(doc["scheme"])
    times = _grid(doc.get("time", {"t_start": 0.0, "t_end": 2.0, "steps": 101}), "$.time")
    taus = _grid(doc["tau"], "$.tau") if "tau" in doc else None
    return RunConfig(model, split, env, rho0_s, rho0, times, taus, scheme, int(doc.get("seed", 0)), doc)


# ---------------------------------------------------------------------------
# output


def config_hash(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: str, header: Sequence[str], rows, doc) -> str:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={config_hash(doc)} version={__version__}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_json(path: str, payload) -> str:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def _pmap(func, items, threads):
    if threads <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def _need(cfg, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"$.{name}: required by this command")


def _pairs(d):
    return [(a, b) for a in range(d) for b in range(d) if a < b]


# ---------------------------------------------------------------------------
# commands


def cmd_evolve(cfg: RunConfig, out, threads):
    _need(cfg, "model")
    rho0 = cfg.rho0
    if rho0 is None:
        q = cfg.env.full_vector()
        rho0 = compose_state(cfg.model, cfg.split, cfg.rho0_s, np.diag(q).astype(complex))
    tensor = PhiTensor(cfg.model)
    snaps = _pmap(lambda t: evolve(cfg.model, rho0, t, tensor), cfg.times, threads)
    payload = {"version": __version__, "config_sha256": config_hash(cfg.raw),
               "snapshots": [{"t": float(t), "rho": [[[v.real, v.imag] for v in row] for row in r]}
                             for t, r in zip(cfg.times, snaps)]}
    return [write_json(os.path.join(out, "evolve.json"), payload)]


def cmd_system(cfg: RunConfig, out, threads):
    _need(cfg, "model")
    rd = ReducedDynamics(cfg.model, cfg.split, cfg.env)
    pairs = _pairs(rd.d_system)

    def one(t):
        f = rd.factors(t)
        rho = system_state(cfg.model, cfg.split, cfg.rho0_s, cfg.env, t, rd)
        return [(t, a, b, f[a, b].real, f[a, b].imag, rho[a, b].real, rho[a, b].imag) for a, b in pairs]

    rows = [r for chunk in _pmap(one, cfg.times, threads) for r in chunk]
    return [write_csv(os.path.join(out, "system.csv"),
                      ["t", "s_tilde", "s", "re_f", "im_f", "re_rho", "im_rho"], rows, cfg.raw)]


def rate_rows(rd: ReducedDynamics, times, threads=1):
    """``(t, s~, s, omega, gamma, diverged)`` from exact log-derivatives."""
    pairs = _pairs(rd.d_system)

    def one(t):
        r = rd.log_rates(t)
        f = rd.factors(t)
        rows = []
        for a, b in pairs:
            if abs(f[a, b]) < 1e-12 or not np.isfinite(r[a, b]):
                rows.append((t, a, b, math.nan, math.nan, 1))
            else:
                w, g = canonical_from_log_rate(r[a, b])
                rows.append((t, a, b, w, g, 0))
        return rows

    return [r for chunk in _pmap(one, times, threads) for r in chunk]


def cmd_rates(cfg: RunConfig, out, threads):
    _need(cfg, "model")
    rd = ReducedDynamics(cfg.model, cfg.split, cfg.env)
    return [write_csv(os.path.join(out, "rates.csv"), ["t", "s_tilde", "s", "omega", "gamma", "diverged"],
                      rate_rows(rd, cfg.times, threads), cfg.raw)]


def cpf_rows(model, split, env, rho0_s, scheme, pairs, threads=1):
    """``(t, tau, y, cpf)`` for every ``(t, tau)`` and intermediate outcome."""
    rd = ReducedDynamics(model, split, env)

    def one(pair):
        t, tau = pair
        table = joint_probability(model, split, env, rho0_s, scheme, t, tau, rd)
        rows = []
        for k, y in enumerate(table.y_values):
            try:
                c = cpf_correlation(table, k)
            except NumericalFailure:
                c = math.nan
            rows.append((t, tau, y, c))
        return rows

    return [r for chunk in _pmap(one, pairs, threads) for r in chunk]


def cmd_cpf(cfg: RunConfig, out, threads):
    _need(cfg, "model", "scheme")
    if cfg.taus is None:
        pairs = [(t, t) for t in cfg.times]
    else:
        pairs = [(t, tau) for t in cfg.times for tau in cfg.taus]
    rows = cpf_rows(cfg.model, cfg.split, cfg.env, cfg.rho0_s, cfg.scheme, pairs, threads)
    return [write_csv(os.path.join(out, "cpf.csv"), ["t", "tau", "y", "cpf"], rows, cfg.raw)]


def _scan_rows(doc):
    n_range = doc.get("n_range", [2, 10])
    if not (isinstance(n_range, list) and len(n_range) == 2):
        raise ConfigError("$.n_range: expected [n_min, n_max]")
    gamma = float(doc.get("gamma", 1.0))
    rows = entanglement_region_scan(range(int(n_range[0]), int(n_range[1]) + 1), gamma=gamma,
                                    tol=float(doc.get("tolerance", 1e-4)))
    return [(r.n, r.chi_star_over_gamma, r.lower_bound, r.upper_bound) for r in rows]


SCAN_HEADER = ["n", "chi_star_over_gamma", "lower_bound", "upper_bound"]


def cmd_entangle_scan(cfg: RunConfig, out, threads):
    return [write_csv(os.path.join(out, "entangle_scan.csv"), SCAN_HEADER, _scan_rows(cfg.raw), cfg.raw)]


def load_preset(name: str) -> dict:
    return json.loads(resources.files("multideph").joinpath("presets", f"{name}.json").read_text())


def _preset_times(doc):
    return _grid(doc["time"], "$.time")


def bipartite_pipeline_model(gamma: float, chi_bar: float) -> ModelSpec:
    """Qubit pair with ``Omega = 0``, ``chi = i chi_bar`` and the smallest PSD ``beta``."""
    beta = chi_bar ** 2 / gamma if gamma else 0.0
    return qubit_model(h=np.zeros((2, 2)), gamma=bipartite_gamma(gamma, beta, 1j * chi_bar))


def cmd_fig1(cfg: RunConfig, out, threads):
    doc = load_preset("fig1")
    gamma = float(doc["gamma"])
    q = np.array([doc["q_plus"], doc["q_minus"]], dtype=float)
    phi = float(doc["phi"])
    times = _preset_times(doc)
    scheme = MeasurementScheme(qubit_direction_projectors(0.0), qubit_direction_projectors(phi),
                               qubit_direction_projectors(0.0))
    env = EnvPopulations(product=(q,))
    split = SplitSpec.first(2)
    written = []
    for ratio in doc["chi_bar_over_gamma"]:
        model = bipartite_pipeline_model(gamma, ratio * gamma)
        rd = ReducedDynamics(model, split, env)
        rates = [(t, w, g, flag) for t, _, _, w, g, flag in rate_rows(rd, times, threads)]
        tag = f"{ratio:+g}"
        written.append(write_csv(os.path.join(out, f"fig1_rates_chi{tag}.csv"),
                                 ["t", "omega", "gamma", "diverged"], rates, doc))
        cpf = cpf_rows(model, split, env, np.eye(2, dtype=complex) / 2, scheme,
                       [(t, t) for t in times], threads)
        written.append(write_csv(os.path.join(out, f"fig1_cpf_chi{tag}.csv"),
                                 ["t", "tau", "y", "cpf"], cpf, doc))
    return written


def cmd_fig2(cfg: RunConfig, out, threads):
    doc = load_preset("fig2")
    return [write_csv(os.path.join(out, "fig2_entangle_scan.csv"), SCAN_HEADER, _scan_rows(doc), doc)]


def _ring_curves(n, gamma, chi, phi, times, threads):
    model = ring_model(RingCouplingParams(n, gamma, chi))
    split = SplitSpec.first(n)
    env = EnvPopulations.uniform([2] * (n - 1))
    rd = ReducedDynamics(model, split, env)
    f_rows = [(t, rd.factors(t)[0, 1].real) for t in times]
    scheme = MeasurementScheme(qubit_direction_projectors(0.0), qubit_direction_projectors(phi),
                               qubit_direction_projectors(0.0))
    cpf = cpf_rows(model, split, env, np.eye(2, dtype=complex) / 2, scheme,
                   [(t, t) for t in times], threads)
    return f_rows, cpf


def cmd_fig3(cfg: RunConfig, out, threads):
    doc = load_preset("fig3")
    gamma, phi = float(doc["gamma"]), float(doc["phi"])
    times = _preset_times(doc)
    written = []
    runs = [(int(doc["n_fixed"]), r) for r in doc["sweeps"]["chi_over_gamma"]]
    runs += [(int(n), float(doc["chi_over_gamma_fixed"])) for n in doc["sweeps"]["n"]]
    for n, ratio in dict.fromkeys(runs):
        f_rows, cpf = _ring_curves(n, gamma, ratio * gamma, phi, times, threads)
        tag = f"n{n}_chi{ratio:+g}"
        written.append(write_csv(os.path.join(out, f"fig3_f_{tag}.csv"), ["t", "f"], f_rows, doc))
        written.append(write_csv(os.path.join(out, f"fig3_cpf_{tag}.csv"), ["t", "tau", "y", "cpf"], cpf, doc))
    return written


def cmd_verify(cfg: RunConfig, out, threads, tolerance=None):
    from .verify import run_checks

    results = run_checks(cfg.seed, tolerance)
    rows = [(r.name, r.error, r.tolerance, int(r.passed)) for r in results]
    path = os.path.join(out, "verify.csv")
    with open(path, "w") as fh:
        fh.write(f"# config_sha256={config_hash(cfg.raw)} version={__version__}\n")
        fh.write("check,max_error,tolerance,passed\n")
        for name, err, tol, ok in rows:
            fh.write(f"{name},{_fmt(err)},{_fmt(tol)},{ok}\n")
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.error:.3e} (tol {r.tolerance:.0e})")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailure(f"failed checks: {', '.join(failed)}")
    return [path]


COMMANDS = {
    "evolve": cmd_evolve,
    "system": cmd_system,
    "rates": cmd_rates,
    "cpf": cmd_cpf,
    "entangle-scan": cmd_entangle_scan,
    "fig1": cmd_fig1,
    "fig2": cmd_fig2,
    "fig3": cmd_fig3,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multideph", description="Exact multipartite dephasing dynamics.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for grid scans")
    p.add_argument("--tolerance", type=float, help="override check tolerances (verify only)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(argv: List[str] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.tolerance is not None and args.command != "verify":
            raise ConfigError("--tolerance applies to verify only")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        doc = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    doc = json.load(fh)
            except OSError as e:
                raise ConfigError(f"cannot read config: {e}") from None
            except json.JSONDecodeError as e:
                raise ConfigError(f"config is not valid JSON: {e}") from None
        cfg = load_config(doc)
        os.makedirs(args.out, exist_ok=True)
        func = COMMANDS[args.command]
        if args.command == "verify":
            written = func(cfg, args.out, args.threads, args.tolerance)
        else:
            written = func(cfg, args.out, args.threads)
        for path in written:
            log.info("wrote %s", path)
        return EXIT_OK
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except VerificationFailure as e:
        print(f"verification failed: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except NumericalFailure as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DephasingError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(run())
