"""Command line entry point: simulate, periodic, verify and basis subcommands."""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .basis import build_basis
from .config import (
    EXIT_BLOWUP,
    EXIT_CHECKS,
    EXIT_INVALID,
    EXIT_NOCONV,
    EXIT_OK,
    DEFAULT_CHECKS,
    ConfigError,
    RunConfig,
    parse_config,
)
from .diagnostics import (
    DiagnosticsConfig,
    apriori_functionals,
    barotropic_l4_functionals,
    cancellation_ratio,
    energy_identity_residual,
    lq_preservation_check,
    read_csv,
    series,
    write_csv,
)
from .dynamics import BlowUpError, ForcingSpec, IntegratorConfig, simulate
from .field import VelocityField, norm, read_checkpoint, reconstruct_w, write_checkpoint
from .periodic import PeriodicSolveConfig, fixed_point_solve

log = logging.getLogger("hydroprim")

CHECKS = DEFAULT_CHECKS


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def emit(report: dict) -> None:
    print(json.dumps(_clean(report), indent=2, sort_keys=False))


# ------------------------------------------------------------------ builders
def _single_mode(basis, component: int, k: int, mode: int, amplitude: float) -> np.ndarray:
    raw = basis.zeros()
    if k == 0:
        if component != 0 or not 0 <= mode < basis.n_bar:
            raise ConfigError(EXIT_INVALID, [
                f"barotropic mode needs component = 0 and 0 <= mode < {basis.n_bar}"])
    elif not (0 < k <= basis.domain.K and 0 <= mode < basis.n_h):
        raise ConfigError(EXIT_INVALID, [
            f"mode (k={k}, index={mode}) outside 1..{basis.domain.K} x 0..{basis.n_h - 1}"])
    raw[component, k, mode] = amplitude
    return raw


def build_initial(cfg: RunConfig, basis) -> VelocityField:
    ini = cfg.initial
    prof = ini["profile"]
    if prof == "zero":
        v = VelocityField.zeros(basis)
    elif prof == "checkpoint":
        v, _ = read_checkpoint(cfg.resolve(ini["checkpoint"]), basis)
    elif prof == "mode":
        v = VelocityField(basis, _single_mode(basis, ini["component"], ini["k"], ini["mode"],
                                              ini["amplitude"]))
    else:
        v = VelocityField.random(basis, ini["seed"], amplitude=ini["amplitude"],
                                 decay=ini["decay"], barotropic=prof != "baroclinic",
                                 baroclinic=prof != "barotropic")
    if ini["regularity"] == "strong" and not math.isfinite(norm(v, "V")):
        raise ConfigError(EXIT_INVALID, ["[initial] data not in H1 (use regularity = z-weak)"])
    return v


def build_forcing(cfg: RunConfig, basis) -> ForcingSpec:
    fo = cfg.forcing
    if fo["variant"] == "zero":
        return ForcingSpec()
    if fo["profile"] == "checkpoint":
        coeffs = read_checkpoint(cfg.resolve(fo["checkpoint"]), basis)[0] * fo["amplitude"]
    elif fo["profile"] == "mode":
        coeffs = _single_mode(basis, fo["component"], fo["k"], fo["mode"], fo["amplitude"])
    else:
        coeffs = VelocityField.random(basis, fo["seed"], amplitude=fo["amplitude"],
                                      decay=fo["decay"]).coeffs
    period = fo["period"] if fo["variant"] == "time_periodic" else None
    return ForcingSpec(fo["variant"], coeffs, period=period, phase=fo["phase"])


def integrator_config(cfg: RunConfig, T_end: float | None = None) -> IntegratorConfig:
    it = cfg.integrator
    return IntegratorConfig(
        dt=it["dt"], scheme=it["scheme"], T_end=it["T_end"] if T_end is None else T_end,
        diag_every=it["diag_every"], checkpoint_every=it["checkpoint_every"] or None,
        nonlinear=it["nonlinear"], cfl=it["cfl"], blowup=it["blowup"])


def diagnostics_config(cfg: RunConfig) -> DiagnosticsConfig:
    return DiagnosticsConfig(q_list=cfg.q_list, eta=cfg.output["eta"],
                             pressure=cfg.output["pressure"])


# --------------------------------------------------------------- subcommands
def cmd_basis(cfg: RunConfig, args) -> int:
    basis = build_basis(cfg.domain_spec())
    emit(basis.metadata())
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args) -> int:
    basis = build_basis(cfg.domain_spec())
    v0 = build_initial(cfg, basis)
    f = build_forcing(cfg, basis)
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    icfg = integrator_config(cfg)
    dcfg = diagnostics_config(cfg)
    status, code, message = "ok", EXIT_OK, ""
    try:
        result = simulate(v0, f, icfg, dcfg,
                          checkpoint_dir=out if icfg.checkpoint_every else None)
    except BlowUpError as exc:
        result, status, code, message = exc.result, "blowup", EXIT_BLOWUP, str(exc)
    csv_path = out / cfg.output["csv"]
    write_csv(csv_path, result.records, cfg.q_list)
    final = out / cfg.output["final_checkpoint"]
    write_checkpoint(final, result.state.v, result.state.t)
    recs = result.records
    report = {
        "status": status,
        "message": message,
        "steps": result.state.step_index,
        "t_final": result.state.t,
        "csv": str(csv_path),
        "final_checkpoint": str(final),
        "checkpoints": len(result.checkpoints),
        "l2_final": norm(result.state.v),
    }
    if recs:
        report["max_cancellation_ratio"] = float(cancellation_ratio(recs).max())
        report["max_energy_residual"] = float(abs(energy_identity_residual(recs)).max())
    emit(report)
    return code


def cmd_periodic(cfg: RunConfig, args) -> int:
    basis = build_basis(cfg.domain_spec())
    pe = cfg.periodic
    v0 = build_initial(cfg, basis)
    try:
        pcfg = PeriodicSolveConfig(
            T=pe["T"], forcing=build_forcing(cfg, basis), theta=pe["damping"], tol=pe["tol"],
            max_iter=pe["max_iter"], integrator=integrator_config(cfg, T_end=pe["T"]),
            anderson=pe["anderson"], ensemble=pe["contraction_ensemble"],
            delta=pe["delta"] or None, seed=pe["seed"])
    except ValueError as exc:
        # cross-section constraints (T against the period and dt) surface here
        raise ConfigError(EXIT_INVALID, [f"[periodic] {exc}"]) from None
    try:
        report = fixed_point_solve(pcfg, v0)
    except BlowUpError as exc:
        emit({"status": "blowup", "message": str(exc)})
        return EXIT_BLOWUP
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    ck = out / pe["checkpoint"]
    write_checkpoint(ck, report.v_star, 0.0)
    body = {"status": "converged" if report.converged else "not_converged",
            "checkpoint": str(ck), **report.as_dict()}
    emit(body)
    return EXIT_OK if report.converged else EXIT_NOCONV


# -------------------------------------------------------------------- verify
def _check_energy(cfg, recs):
    r = energy_identity_residual(recs)
    worst = float(abs(r).max())
    return {"pass": worst <= cfg.verify["energy_tol"], "max_residual": worst,
            "tolerance": cfg.verify["energy_tol"]}


def _check_cancellation(cfg, recs):
    worst = float(cancellation_ratio(recs).max())
    return {"pass": worst <= cfg.verify["cancellation_tol"], "max_residual": worst}


def _check_kinematics(cfg, recs):
    kin = float(series(recs, "kinematic").max())
    top = float(max(series(recs, "w_top").max(), series(recs, "w_bottom").max()))
    tol = cfg.verify["kinematic_tol"]
    return {"pass": kin <= tol and top <= tol, "max_residual": max(kin, top),
            "kinematic": kin, "w_boundary": top}


def _check_pressure(cfg, recs):
    orth = series(recs, "p_orthogonality")
    ratio = series(recs, "p_bound_ratio")
    if not np.all(np.isfinite(orth)):
        return {"pass": False, "reason": "pressure diagnostics were not recorded"}
    worst, fitted = float(orth.max()), float(ratio.max())
    ok = worst <= cfg.verify["pressure_tol"] and fitted <= 1 + cfg.verify["bound_tol"]
    return {"pass": ok, "max_residual": worst, "fitted_constant": fitted}


def _check_lq(cfg, recs):
    out = {"pass": True, "fitted_constants": {}}
    for q in (q for q in cfg.q_list if q > 2):
        c = lq_preservation_check(recs, q)
        out["fitted_constants"][f"q={q:g}"] = c["fitted_c"]
        out["pass"] &= math.isfinite(c["fitted_c"])
    return out


def _check_apriori(cfg, recs):
    res = apriori_functionals(recs)
    return {"pass": math.isfinite(res["fitted_C"]), "fitted_constant": res["fitted_C"]}


def _check_barotropic(cfg, recs):
    res = barotropic_l4_functionals(recs)
    ok = math.isfinite(res["fitted_K"]) and math.isfinite(res["fitted_K_div"])
    return {"pass": ok, "fitted_constant": res["fitted_K"],
            "fitted_constant_div": res["fitted_K_div"]}


def _check_monotone(cfg, recs):
    if cfg.forcing["variant"] != "zero":
        return {"pass": True, "skipped": "forced run"}
    l2 = series(recs, "l2")
    worst = float(max(np.diff(l2).max(initial=0.0), 0.0))
    return {"pass": worst <= 1e-14 * max(l2[0], 1.0), "max_increase": worst}


def _check_checkpoint(cfg, recs):
    out = cfg.out_dir()
    files = sorted(out.glob("*.pehv"))
    if not files:
        return {"pass": False, "reason": f"no checkpoints in {out}"}
    basis, worst_w, exact = None, 0.0, True
    with tempfile.TemporaryDirectory() as tmp:
        for path in files:
            v, t = read_checkpoint(path, basis)
            basis = v.basis
            w = reconstruct_w(v, check=False)
            worst_w = max(worst_w, float(abs(w.top).max()))
            again = Path(tmp) / "rt.pehv"
            write_checkpoint(again, v, t)
            exact &= again.read_bytes() == path.read_bytes()
    final = out / cfg.output["final_checkpoint"]
    l2_gap = None
    if final.exists() and recs:
        l2_gap = abs(norm(read_checkpoint(final, basis)[0]) - recs[-1].l2)
    ok = exact and worst_w <= cfg.verify["kinematic_tol"] and (
        l2_gap is None or l2_gap <= 1e-12 * max(1.0, recs[-1].l2))
    return {"pass": ok, "files": len(files), "bit_exact_roundtrip": exact,
            "max_w_top": worst_w, "final_l2_gap": l2_gap}


_CHECK_FUNCS = {
    "energy": _check_energy, "cancellation": _check_cancellation,
    "kinematics": _check_kinematics, "pressure": _check_pressure, "lq": _check_lq,
    "apriori": _check_apriori, "barotropic": _check_barotropic,
    "monotone": _check_monotone, "checkpoint": _check_checkpoint,
}


def cmd_verify(cfg: RunConfig, args) -> int:
    checks = [c.strip() for c in args.checks.split(",")] if args.checks else cfg.checks
    unknown = [c for c in checks if c not in _CHECK_FUNCS]
    if unknown:
        raise ConfigError(EXIT_INVALID, [f"unknown checks: {', '.join(unknown)}"])
    csv_path = cfg.resolve(cfg.verify["csv"]) if cfg.verify["csv"] else \
        cfg.out_dir() / cfg.output["csv"]
    if not csv_path.exists():
        raise ConfigError(EXIT_INVALID, [f"diagnostics CSV not found: {csv_path}"])
    recs = read_csv(csv_path)
    results = []
    for name in checks:
        res = _CHECK_FUNCS[name](cfg, recs) if recs else {"pass": False, "reason": "empty CSV"}
        res["pass"] = bool(res["pass"])
        results.append({"check": name, **res})
    ok = all(r["pass"] for r in results)
    emit({"status": "pass" if ok else "fail", "csv": str(csv_path), "checks": results})
    return EXIT_OK if ok else EXIT_CHECKS


COMMANDS = {"simulate": cmd_simulate, "periodic": cmd_periodic, "verify": cmd_verify,
            "basis": cmd_basis}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydroprim", description=__doc__)
    p.add_argument("--log-level", default="WARNING")
    p.add_argument("--strict-deterministic", action="store_true",
                   help="run every ensemble member sequentially for bit-exact reruns")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="INI run file")
        if name == "verify":
            sp.add_argument("--checks", default=None,
                            help=f"comma list out of {', '.join(CHECKS)}")
    return p


def run(command: str, cfg: RunConfig, args) -> int:
    return COMMANDS[command](cfg, args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.strict_deterministic:
        os.environ["HYDROPRIM_THREADS"] = "1"
    try:
        cfg = parse_config(args.config)
        return run(args.command, cfg, args)
    except ConfigError as exc:
        print(json.dumps({"status": "error", "exit_code": exc.code,
                          "problems": exc.problems}, indent=2), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
