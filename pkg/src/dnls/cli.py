"""Command-line front end: ``dnls <command> --config <path> [--seed N] [--out DIR]``.

Every run writes ``config.json`` (canonical echo of the accepted config),
``diagnostics.csv`` and ``report.json`` into the output directory.  Exit codes:
0 pass, 1 configuration/validation error, 2 numerical failure or failed audit.
"""

import argparse
import csv
import dataclasses
import io
import itertools
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .attractor import (CutoffSpec, WeightSpec, tail_audit, truncation_delta,
                        weighted_audit)
from .config import (KINDS, ExperimentConfig, build_forcing, build_initial, dumps,
                     load_config, parse_config)
from .dynamics import (IntegratorConfig, absorbing_prediction, decay_audit, integrate,
                       observe_absorption)
from .exceptions import AuditFailure, NumericalError, ValidationError
from .lattice import LatticeState, ModelParams
from .stationary import (contraction_probe, continuation, critical_energy,
                         mountain_pass_geometry, newton_standing_wave)

__all__ = ["RunArtifacts", "run", "sweep", "main", "CSV_HEADER"]

CSV_HEADER = ("t", "charge", "energy", "l21_sq", "tail_M", "weighted_norm", "J", "Lambda")
EXIT_OK, EXIT_CONFIG, EXIT_FAIL = 0, 1, 2


def _threads():
    raw = os.environ.get("DNLS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"DNLS_THREADS must be a positive integer, got {raw!r}")
    if n < 1:
        raise ValidationError(f"DNLS_THREADS must be a positive integer, got {raw!r}")
    return n


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _jsonable(obj):
    if isinstance(obj, LatticeState):
        return {"t": obj.t, "re": obj.amplitudes.real.tolist(),
                "im": obj.amplitudes.imag.tolist()}
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, ModelParams):
        return {"epsilon": obj.epsilon, "delta": obj.delta, "sigma": obj.sigma,
                "half_width": obj.half_width, "forcing_norm": obj.forcing_norm}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _csv_text(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


@dataclass
class RunArtifacts:
    diagnostics_csv: Optional[str]
    report_json: Optional[str]
    config_echo: Optional[str]
    snapshots: Optional[str] = None
    exit_code: int = EXIT_OK
    report: Optional[dict] = None


def _integrator(cfg):
    return IntegratorConfig(scheme=cfg["scheme"], dt=cfg["dt"],
                            solver_tol=cfg.get("solver_tol", 1e-12),
                            max_inner_iters=cfg.get("max_inner_iters", 50),
                            record_stride=cfg["record_stride"])


def _params(cfg, m=None):
    m = cfg["m"] if m is None else m
    return ModelParams(cfg["epsilon"], cfg.get("delta", 0.0), cfg["sigma"], m,
                       build_forcing(cfg))


# -- per-kind drivers: each returns (rows, report dict, passed, snapshots) -------

def _simulate(cfg, seed):
    params = _params(cfg)
    u0 = build_initial(cfg, seed)
    weights = None
    if cfg["lambda"] is not None:
        weights = WeightSpec(cfg["weight_family"], cfg["lambda"]).weights(cfg["m"])
    traj = integrate(u0, params, _integrator(cfg), cfg["T"],
                     keep_snapshots=cfg["save_snapshots"], tail_M=cfg["tail_M"],
                     weights=weights)
    audit = decay_audit(traj, strict=False)
    ch = traj.column("charge")
    report = {"audit": audit, "final_time": traj.times[-1],
              "charge_drift_rel": float(np.max(np.abs(ch - ch[0])) / ch[0]) if ch[0] else 0.0}
    en = traj.column("energy")
    if en[0] != 0:
        report["energy_drift_rel"] = float(np.max(np.abs(en - en[0])) / abs(en[0]))
    if cfg["rho1"] is not None:
        pred = absorbing_prediction(params.forcing_norm, params.delta, cfg["rho1"],
                                    math.sqrt(ch[0]), params.epsilon, params.sigma)
        report["absorbing"] = observe_absorption(traj, pred)
    return traj.rows, report, audit.passed, traj.snapshots


def _standing_wave(cfg, seed):
    seed_state = build_initial(cfg, seed)
    if cfg["coupling_schedule"] is not None:
        branch = continuation(seed_state, cfg["omega"], cfg["sigma"],
                              cfg["coupling_schedule"], cfg["tol"], cfg["max_iter"])
        if not branch.completed:
            raise NumericalError(branch.message)
        wave = branch.waves[-1]
    else:
        wave = newton_standing_wave(seed_state, cfg["epsilon"], cfg["omega"],
                                    cfg["sigma"], cfg["tol"], cfg["max_iter"])
    Ec = critical_energy(cfg["omega"], cfg["sigma"])
    report = {"wave": wave, "l2_norm": wave.l2_norm, "critical_energy": Ec,
              "trivial": wave.trivial, "consistent_with_threshold":
              wave.trivial or wave.l2_norm > Ec}
    passed = wave.residual <= cfg["tol"] and report["consistent_with_threshold"]
    rows = []
    if cfg["T"] is not None and not wave.trivial:
        eps = math.inf if wave.coupling == 0 else 1.0 / wave.coupling
        params = ModelParams(eps, 0.0, cfg["sigma"], cfg["m"])
        config = IntegratorConfig(scheme=cfg["scheme"], dt=cfg["dt"], record_stride=1)
        traj = integrate(wave.phi, params, config, cfg["T"], keep_snapshots=True)
        phi = wave.phi.amplitudes
        err = max(float(np.linalg.norm(s.amplitudes - np.exp(1j * wave.omega ** 2 * t) * phi))
                  for t, s in traj.snapshots)
        report["orbit_error"] = err
        rows = traj.rows[::cfg["record_stride"]]
        if rows[-1] is not traj.rows[-1]:
            rows.append(traj.rows[-1])
    return rows, report, passed, None


def _contraction(cfg, seed):
    rep = contraction_probe(cfg["R"], cfg["epsilon"], cfg["omega"], cfg["sigma"],
                            cfg["n_pairs"], seed, cfg["m"], cfg["max_iter"], cfg["tol"])
    passed = rep.empirical_ratio_max <= rep.lipschitz_bound + 1e-9
    if rep.lipschitz_bound < 1.0:
        passed = passed and rep.converged_to_zero
    return [], {"probe": rep}, passed, None


def _geometry(cfg, seed):
    rep = mountain_pass_geometry(cfg["r"], cfg["epsilon"], cfg["omega"], cfg["sigma"],
                                 cfg["n_samples"], seed, cfg["m"])
    return [], {"geometry": rep}, rep.passed, None


def _tail(cfg, seed):
    params = _params(cfg)
    u0 = build_initial(cfg, seed)
    M_values = cfg["M_values"]
    traj = integrate(u0, params, _integrator(cfg), cfg["T"], keep_snapshots=True,
                     tail_M=min(M_values) if M_values else None)
    rep = tail_audit(traj, cfg["eta"], cfg["rho1"], CutoffSpec(), M_values)
    if M_values is None:
        traj = dataclasses.replace(traj, rows=[
            dataclasses.replace(r, tail_M=v) for r, (_, v) in zip(traj.rows, rep.observed_tail)])
    return traj.rows, {"tail": rep}, rep.passed, None


def _truncation(cfg, seed):
    m0 = min(cfg["m_values"])
    params = _params(cfg, m0)
    u0 = build_initial(cfg, seed)
    rep = truncation_delta([u0], params, cfg["m_values"], cfg["m_ref"], cfg["T"],
                           _integrator(cfg), max_workers=_threads())
    nonincreasing = all(b <= a for a, b in zip(rep.deltas, rep.deltas[1:]))
    return [], {"truncation": rep, "nonincreasing": nonincreasing}, nonincreasing, None


def _weighted(cfg, seed):
    params = _params(cfg)
    spec = WeightSpec(cfg["weight_family"], cfg["lambda"])
    u0 = build_initial(cfg, seed)
    traj = integrate(u0, params, _integrator(cfg), cfg["T"], keep_snapshots=True,
                     weights=spec.weights(cfg["m"]))
    rep = weighted_audit(traj, spec, cfg["eta"], cfg["M"])
    report = {"weighted": rep, "weight_spec": spec}
    return traj.rows, report, rep.passed, None


_DRIVERS = {
    "simulate": _simulate,
    "standing_wave": _standing_wave,
    "contraction_probe": _contraction,
    "geometry_check": _geometry,
    "tail_audit": _tail,
    "truncation_sweep": _truncation,
    "weight_audit": _weighted,
}


def execute(cfg, seed=None):
    """Run ``cfg`` without touching the filesystem.

    Returns ``(exit_code, rows, report, snapshots)``; numerical failures and
    failed audits give exit code 2 with the error recorded in the report.
    """
    seed = cfg["seed"] if seed is None else seed
    try:
        rows, body, passed, snaps = _DRIVERS[cfg.kind](cfg, seed)
    except (NumericalError, AuditFailure) as exc:
        report = {"kind": cfg.kind, "seed": seed, "status": "numerical_failure"
                  if isinstance(exc, NumericalError) else "audit_failure",
                  "passed": False, "error": str(exc)}
        for attr in ("time", "iteration", "residual"):
            if getattr(exc, attr, None) is not None:
                report[attr] = getattr(exc, attr)
        return EXIT_FAIL, [], _jsonable(report), None
    report = {"kind": cfg.kind, "seed": seed, "status": "ok" if passed else "failed",
              "passed": bool(passed), **body}
    return (EXIT_OK if passed else EXIT_FAIL), rows, _jsonable(report), snaps


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def run(config, out_dir=None, seed=None):
    """Run one experiment and write its artifacts into ``out_dir``."""
    cfg = config if isinstance(config, ExperimentConfig) else parse_config(config)
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    out_dir = out_dir or cfg["output_dir"] or os.path.join("dnls_out", cfg.kind)
    os.makedirs(out_dir, exist_ok=True)
    echo = os.path.join(out_dir, "config.json")
    _write(echo, cfg.echo())
    code, rows, report, snaps = execute(cfg)
    csv_path = os.path.join(out_dir, "diagnostics.csv")
    _write(csv_path, _csv_text(rows))
    report_path = os.path.join(out_dir, "report.json")
    _write(report_path, dumps(report))
    snap_path = None
    if snaps:
        snap_path = os.path.join(out_dir, "snapshots.jsonl")
        _write(snap_path, "".join(json.dumps(_jsonable(s), sort_keys=True) + "\n"
                                  for _, s in snaps))
    return RunArtifacts(csv_path, report_path, echo, snap_path, code, report)


# -- sweeps ------------------------------------------------------------------------

_SUMMARY = {
    "simulate": [("charge_drift_rel", ("charge_drift_rel",)),
                 ("energy_drift_rel", ("energy_drift_rel",)),
                 ("gronwall_margin", ("audit", "gronwall_margin")),
                 ("growth_margin", ("audit", "growth_margin"))],
    "standing_wave": [("residual", ("wave", "residual")), ("energy", ("wave", "energy")),
                      ("l2_norm", ("l2_norm",)), ("trivial", ("trivial",))],
    "contraction_probe": [("lipschitz_bound", ("probe", "lipschitz_bound")),
                          ("empirical_ratio_max", ("probe", "empirical_ratio_max")),
                          ("converged_to_zero", ("probe", "converged_to_zero"))],
    "geometry_check": [("alpha", ("geometry", "alpha")),
                       ("rim_min_sampled", ("geometry", "rim_min_sampled")),
                       ("ray_negative_t", ("geometry", "ray_negative_t"))],
    "tail_audit": [("K_eta", ("tail", "K_eta")), ("T_eta", ("tail", "T_eta")),
                   ("bound", ("tail", "bound"))],
    "truncation_sweep": [("deltas", ("truncation", "deltas"))],
    "weight_audit": [("bound", ("weighted", "bound")),
                     ("norm_bound", ("weighted", "norm_bound")),
                     ("max_weighted_norm_sq", ("weighted", "max_weighted_norm_sq"))],
}


def _dig(d, path):
    for k in path:
        if not isinstance(d, dict) or k not in d:
            return None
        d = d[k]
    if isinstance(d, list):
        return ";".join(_fmt(x) for x in d)
    return d


def point_seed(base_seed, index):
    """Seed of grid point ``index``; independent of scheduling and thread count."""
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


def sweep(spec, out_dir=None, max_workers=None):
    """Run a grid of experiments; returns ``(exit_code, csv_text)``.

    ``spec = {"base": {...config...}, "grid": {"delta": [0.1, 0.2], ...}}``.
    Points are the Cartesian product of the grid lists in key order.  Rows come
    out in grid order whatever the completion order; per-point failures are
    recorded in the row and make the exit code 2.  An empty grid yields a
    header-only CSV and exit code 0.
    """
    if not isinstance(spec, dict):
        raise ValidationError("sweep spec must be a JSON object")
    unknown = set(spec) - {"base", "grid"}
    if unknown:
        raise ValidationError(f"unknown sweep keys {sorted(unknown)}; expected base, grid")
    base = parse_config(spec.get("base", {}))
    grid = spec.get("grid", {})
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise ValidationError("grid must map field names to lists of values")
    keys = list(grid)
    for k in keys:
        if k not in base.values or k in ("kind", "seed", "output_dir"):
            raise ValidationError(f"grid field {k!r} is not a sweepable field of "
                                  f"{base.kind}")
    points = [] if not keys else list(itertools.product(*(grid[k] for k in keys)))
    summary = _SUMMARY[base.kind]
    header = (["index", *keys, "seed", "status", "exit_code"]
              + [name for name, _ in summary] + ["message"])

    def one(i):
        values = dict(zip(keys, points[i]))
        seed = point_seed(base["seed"], i)
        try:
            cfg = base.replace(**values, seed=seed)
        except ValidationError as exc:
            return values, seed, EXIT_CONFIG, {"status": "invalid", "error": str(exc)}
        if out_dir is not None:
            art = run(cfg, os.path.join(out_dir, f"point_{i:04d}"))
            return values, seed, art.exit_code, art.report
        code, _, report, _ = execute(cfg)
        return values, seed, code, report

    workers = max_workers or _threads()
    if workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(points))))
    else:
        results = [one(i) for i in range(len(points))]

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    worst = EXIT_OK
    for i, (values, seed, code, report) in enumerate(results):
        worst = max(worst, code)
        w.writerow([i, *(_fmt(values[k]) for k in keys), seed, report.get("status"), code]
                   + [_fmt(_dig(report, path)) for _, path in summary]
                   + [report.get("error", "")])
    text = buf.getvalue()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write(os.path.join(out_dir, "sweep.csv"), text)
    return (EXIT_FAIL if worst else EXIT_OK), text


# -- entry point -------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="dnls", description="DNLS lattice experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS + ("sweep",):
        sp = sub.add_parser(kind.replace("_", "-"))
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--out", default=None, help="output directory")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        if args.command == "sweep":
            try:
                with open(args.config, encoding="utf-8") as fh:
                    spec = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ValidationError(f"cannot load sweep spec {args.config}: {exc}")
            if args.seed is not None:
                spec = {**spec, "base": {**spec.get("base", {}), "seed": args.seed}}
            out = args.out or "dnls_out/sweep"
            code, _ = sweep(spec, out)
            print(os.path.join(out, "sweep.csv"))
            return code
        cfg = load_config(args.config, args.command)
        art = run(cfg, args.out, args.seed)
    except ValidationError as exc:
        print(f"dnls: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    status = art.report.get("status")
    print(f"{cfg.kind}: {status} -> {os.path.dirname(art.report_json)}")
    if art.report.get("error"):
        print(f"dnls: {art.report['error']}", file=sys.stderr)
    return art.exit_code


if __name__ == "__main__":
    sys.exit(main())
