"""Command-line front end.

    krasovskii {check,simulate,control,optimize,interconnect} --config run.json --out DIR [--seed N]

Exit codes: 0 pass, 1 usage or config error, 2 certificate or check
failure, 3 runtime or simulation fault. Every command writes
``report.json`` to the output directory; ``check`` and ``interconnect``
also write ``certificate.json``, and the simulating commands write
``trajectory.csv``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import RunConfig, load
from .control import (KrasovskiiController, close_loop, closed_loop_dissipation, interconnect,
                      interconnection_dissipation, storage_monotonicity)
from .dynamics import extend, find_equilibrium
from .errors import ConfigError, ConvergenceError, KrasovskiiError, NotApplicableError, SimulationError, SolverError
from .models import (BoostParams, ModelBundle, RlcZipParams, boost_converter, boost_equilibrium, in_set_b,
                     linear_system, parallel_rlc_zip, rlc_equilibrium_voltages, rlc_zip_default_M)
from .optim import build_primal_dual, kkt_residual, kkt_stop, quadratic_program, solve_kkt_direct
from .passivity import (RegionSampler, StorageMetric, auto_metric_ph, check_gradient, check_ph, check_prop1,
                        gradient_metric)
from .sim import (CIRCUIT_STEP, FLOW_STEP, Constant, PiecewiseConstant, SimConfig, convergence_metrics, integrate,
                  random_piecewise_constant, verify_dissipation, zero)

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_FAULT = 0, 1, 2, 3


# -- builders ------------------------------------------------------------------

def _square(value, n):
    """Scalar -> value * I, vector -> diag, nested list -> matrix."""
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return float(a) * np.eye(n)
    if a.ndim == 1:
        return np.diag(a)
    return a


def build_model(spec: dict) -> ModelBundle:
    kind = spec["kind"]
    if kind == "boost":
        p = BoostParams(**spec.get("params", {}))
        sys_, phs = boost_converter(p)
        return ModelBundle("boost", sys_, np.diag([p.L, p.C]), ph=phs, params=p)
    if kind == "rlc_zip":
        p = RlcZipParams(**spec.get("params", {}))
        sys_, gsys = parallel_rlc_zip(p)
        M = rlc_zip_default_M(p)
        return ModelBundle("rlc_zip", sys_, gradient_metric(gsys, M).Q, gradient=gsys, params=p, extras={"M": M})
    if kind == "primal_dual":
        P = np.atleast_2d(np.asarray(spec["P"], dtype=float))
        n = P.shape[0]
        A = np.asarray(spec.get("A", np.zeros((0, n))), dtype=float).reshape(-1, n)
        m = A.shape[0]
        prog = quadratic_program(P, spec["q"], A, spec.get("b", np.zeros(m)),
                                 _square(spec.get("tau_x", 1.0), n), _square(spec.get("tau_lam", 1.0), m))
        sys_, metric = build_primal_dual(prog)
        return ModelBundle("primal_dual", sys_, metric.Q, params=prog)
    A = np.atleast_2d(np.asarray(spec["A"], dtype=float))
    return ModelBundle("linear", linear_system(A, np.asarray(spec["B"], dtype=float)))


def resolve_metric(bundle: ModelBundle, spec: dict) -> StorageMetric:
    kind = spec.get("kind", "default")
    n = bundle.system.n
    if kind == "explicit":
        Q = _square(spec["Q"], n)
        if Q.shape != (n, n):
            raise ConfigError(f"metric.Q must be {n}x{n} for model {bundle.name}")
        return StorageMetric(Q)
    if kind == "auto_ph":
        if bundle.ph is None:
            raise NotApplicableError(f"model {bundle.name} has no port-Hamiltonian form")
        return auto_metric_ph(bundle.ph, spec.get("alpha", 1.0))
    if kind == "gradient":
        if bundle.gradient is None:
            raise NotApplicableError(f"model {bundle.name} has no gradient form")
        return gradient_metric(bundle.gradient, _square(spec["M"], n) if "M" in spec else bundle.extras["M"])
    if bundle.default_metric is None:
        raise ConfigError(f"model {bundle.name} has no default metric; give metric.kind 'explicit'")
    return StorageMetric(bundle.default_metric)


def build_sampler(spec: dict, bundle: ModelBundle, seed: int) -> RegionSampler:
    n, m = bundle.system.n, bundle.system.m
    if len(spec["lows"]) != n + m or len(spec["highs"]) != n + m:
        raise ConfigError(f"sampler bounds need {n + m} entries (state then input) for model {bundle.name}")
    predicate = None
    if spec.get("region", "box") == "set_b":
        if bundle.name != "rlc_zip":
            raise ConfigError("sampler.region 'set_b' applies to rlc_zip only")
        p = bundle.params
        predicate = lambda x, u: in_set_b(p, x)  # noqa: E731
    return RegionSampler(spec["lows"], spec["highs"], n, samples=spec.get("samples", 1000),
                         seed=spec.get("seed", seed), predicate=predicate)


def build_signal(spec, m, t_end, h, seed):
    if spec is None or spec["kind"] == "zero":
        return zero(m)
    if spec["kind"] == "constant":
        value = np.broadcast_to(np.asarray(spec["value"], dtype=float), (m,)).copy()
        return Constant(value)
    if spec["kind"] == "piecewise":
        values = np.asarray(spec["values"], dtype=float).reshape(len(spec["times"]), -1)
        if values.shape[1] != m:
            raise ConfigError(f"signal values need {m} columns")
        return PiecewiseConstant(spec["times"], values)
    return random_piecewise_constant(np.random.default_rng(seed), m, t_end, h, spec["pieces"], spec["bound"])


def _vector(value, size, what):
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if v.shape != (size,):
        raise ConfigError(f"{what} needs {size} entries, got {v.size}")
    return v


def _default_step(bundle):
    return FLOW_STEP if bundle.name == "primal_dual" else CIRCUIT_STEP


def _sim_settings(cfg: RunConfig, bundle):
    sim = cfg.section("sim")
    if "t_end" not in sim:
        raise ConfigError("sim.t_end is required")
    return sim, sim["t_end"], sim.get("h", _default_step(bundle))


# -- reports -------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(out, name, payload):
    with open(os.path.join(out, name), "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _verdict(ok):
    return "PASS" if ok else "FAIL"


# -- commands ------------------------------------------------------------------

def _certify(bundle, metric_spec, sampler_spec, cfg):
    tol = cfg.tolerances
    kind = metric_spec.get("kind", "default")
    sampler = build_sampler(sampler_spec, bundle, cfg.seed) if sampler_spec is not None else None
    if kind == "auto_ph":
        Q = resolve_metric(bundle, metric_spec)
        return check_ph(bundle.ph, Q, sampler, tol.neg, tol.zero), Q
    if sampler is None:
        raise ConfigError(f"metric kind '{kind}' is checked on samples; add a 'sampler' section")
    if kind == "gradient":
        Q = resolve_metric(bundle, metric_spec)
        M = _square(metric_spec["M"], bundle.system.n) if "M" in metric_spec else bundle.extras["M"]
        cert, _ = check_gradient(bundle.gradient, M, sampler, tol.neg)
        return cert, Q
    Q = resolve_metric(bundle, metric_spec)
    return check_prop1(bundle.system, Q, sampler, tol.neg, tol.zero), Q


def cmd_check(cfg: RunConfig, out: str) -> int:
    """Certify Krasovskii passivity of a model on a sampled region."""
    bundle = build_model(cfg.section("model"))
    cert, Q = _certify(bundle, cfg.get("metric", {"kind": "default"}), cfg.get("sampler"), cfg)
    _write_json(out, "certificate.json", cert.to_dict())
    _write_json(out, "report.json", {"command": "check", "model": bundle.name, "pass": cert.passed,
                                     "certificate": cert.to_dict()})
    print(f"check {bundle.name} [{cert.condition}]: {_verdict(cert.passed)}  "
          f"worst_max_eig={cert.worst_max_eig:.3e}  worst_zero={cert.worst_zero_entry:.3e}  samples={cert.samples}")
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    """Simulate the extended system under an input-rate signal and check dissipation."""
    bundle = build_model(cfg.section("model"))
    sys_ = bundle.system
    Q = resolve_metric(bundle, cfg.get("metric", {"kind": "default"}))
    sim, t_end, h = _sim_settings(cfg, bundle)
    if "x0" not in sim or "u0" not in sim:
        raise ConfigError("simulate needs sim.x0 and sim.u0")
    z0 = np.concatenate([_vector(sim["x0"], sys_.n, "sim.x0"), _vector(sim["u0"], sys_.m, "sim.u0")])
    signal = build_signal(sim.get("signal"), sys_.m, t_end, h, cfg.seed)
    traj = integrate(extend(sys_), SimConfig(t_end, h, z0, signal, sim.get("record_every", 1)), metric=Q)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    rep = verify_dissipation(traj, sys_, Q, cfg.tolerances.dissipation)
    _write_json(out, "report.json", {"command": "simulate", "model": bundle.name, "steps": len(traj) - 1,
                                     "metric": Q.Q, "dissipation": rep.to_dict(), "pass": rep.passed})
    print(f"simulate {bundle.name}: {len(traj) - 1} steps, dissipation {_verdict(rep.passed)}  "
          f"min_residual={rep.min_residual:.3e}  tol={rep.tolerance:.3e}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _setpoint(bundle, ctrl_spec, x_guess):
    sys_ = bundle.system
    if "x_star" in ctrl_spec:
        if "u_star" not in ctrl_spec:
            raise ConfigError("controller.x_star needs controller.u_star")
        return _vector(ctrl_spec["x_star"], sys_.n, "x_star"), _vector(ctrl_spec["u_star"], sys_.m, "u_star")
    if bundle.name == "boost":
        if "V_star" not in ctrl_spec:
            raise ConfigError("boost control needs controller.V_star")
        eq = boost_equilibrium(bundle.params, ctrl_spec["V_star"], sys_)
        return eq.x_star, eq.u_star
    if "u_star" not in ctrl_spec:
        raise ConfigError("controller needs u_star (or x_star and u_star)")
    u_star = _vector(ctrl_spec["u_star"], sys_.m, "u_star")
    if bundle.name == "rlc_zip" and x_guess is None:
        V = rlc_equilibrium_voltages(bundle.params, float(u_star[0]))[0]
        x_guess = np.array([(u_star[0] - V) / bundle.params.R, V])
    guess = np.ones(sys_.n) if x_guess is None else x_guess
    eq = find_equilibrium(sys_, (guess, u_star), frozen=[False] * sys_.n + [True] * sys_.m)
    return eq.x_star, eq.u_star


def cmd_control(cfg: RunConfig, out: str) -> int:
    """Close the loop with the rate controller and report convergence."""
    bundle = build_model(cfg.section("model"))
    sys_ = bundle.system
    Q = resolve_metric(bundle, cfg.get("metric", {"kind": "default"}))
    spec = cfg.section("controller")
    sim, t_end, h = _sim_settings(cfg, bundle)
    x_star, u_star = _setpoint(bundle, spec, None)
    nu = build_signal(spec.get("nu"), sys_.m, t_end, h, cfg.seed)
    ctrl = KrasovskiiController(_square(spec.get("K1", 1.0), sys_.m), _square(spec.get("K2", 1.0), sys_.m),
                                u_star, nu)
    cl = close_loop(extend(sys_), Q, ctrl, (x_star, u_star), gain_sign=spec.get("gain_sign", 1))
    scale = 1.0 + spec.get("perturbation", 0.1)
    x0 = _vector(sim["x0"], sys_.n, "sim.x0") if "x0" in sim else scale * x_star
    u0 = _vector(sim["u0"], sys_.m, "sim.u0") if "u0" in sim else scale * u_star
    every = sim.get("record_every", 1)
    forced = isinstance(nu, Constant) and not np.any(nu.value)
    if not forced and every != 1:
        raise ConfigError("the dissipation check with nonzero nu needs sim.record_every = 1")
    traj = integrate(cl, SimConfig(t_end, h, np.concatenate([x0, u0]), nu, every), compiled=spec.get("compiled"))
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    band = spec.get("band", 1e-3)
    settling, final_error = convergence_metrics(traj, (x_star, u_star), band)
    worst_rise, monotone = storage_monotonicity(traj.channels["S_d"], cfg.tolerances.dissipation)
    quad, vec = traj.channels["inv_quad"][-1], traj.channels["inv_vec"][-1]
    inv_ok = abs(quad) <= cfg.tolerances.invariant and np.max(np.abs(vec)) <= cfg.tolerances.invariant
    report = {"command": "control", "model": bundle.name, "x_star": x_star, "u_star": u_star,
              "gain_sign": cl.gain_sign, "settling_time": settling, "final_error": final_error, "band": band,
              "S_d_worst_relative_rise": worst_rise, "S_d_nonincreasing": monotone,
              "invariant_residuals": {"quadratic": quad, "vector": vec, "pass": inv_ok}}
    if forced:
        ok = monotone and final_error <= band and inv_ok
        claim = f"settling={settling:.4g}s final_error={final_error:.3e} S_d nonincreasing={monotone}"
    else:
        rep = closed_loop_dissipation(traj, cfg.tolerances.dissipation)
        report["dissipation"] = rep.to_dict()
        ok = rep.passed
        claim = f"dissipation wrt u_d.nu {_verdict(ok)} min_residual={rep.min_residual:.3e}"
    report["pass"] = ok
    _write_json(out, "report.json", report)
    print(f"control {bundle.name}: {_verdict(ok)}  {claim}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_optimize(cfg: RunConfig, out: str) -> int:
    """Run the primal-dual flow and compare with the direct KKT solve."""
    model = cfg.section("model")
    if model["kind"] != "primal_dual":
        raise ConfigError("optimize needs model.kind 'primal_dual'")
    bundle = build_model(model)
    prog = bundle.params
    sys_, metric = build_primal_dual(prog)
    opt = cfg.get("optimize", {})
    tol, match_tol = opt.get("tol", 1e-8), opt.get("match_tol", 1e-6)
    sim, t_end, h = _sim_settings(cfg, bundle)
    x0 = _vector(sim.get("x0", np.zeros(prog.n)), prog.n, "sim.x0")
    lam0 = _vector(sim.get("lam0", np.zeros(prog.m)), prog.m, "sim.lam0") if prog.m else np.zeros(0)
    traj = integrate(sys_, SimConfig(t_end, h, np.concatenate([x0, lam0]), zero(prog.n), sim.get("record_every", 1)),
                     metric=metric, stop=kkt_stop(prog, tol, opt.get("patience", 10)))
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    z = traj.states[-1]
    x, lam = z[:prog.n], z[prog.n:]
    stat, feas = kkt_residual(prog, x, lam)
    direct = solve_kkt_direct(prog)
    gap = float(np.max(np.abs(np.concatenate([x - direct.x_star, lam - direct.lambda_star]))))
    worst_rise, monotone = storage_monotonicity(traj.channels["S_K"], cfg.tolerances.dissipation)
    ok = gap <= match_tol and monotone
    _write_json(out, "report.json", {
        "command": "optimize", "n": prog.n, "m": prog.m, "t_stop": traj.times[-1],
        "x": x, "lambda": lam, "stationarity": stat, "feasibility": feas,
        "direct": {"x": direct.x_star, "lambda": direct.lambda_star}, "max_abs_gap": gap, "match_tol": match_tol,
        "S_K_worst_relative_rise": worst_rise, "S_K_nonincreasing": monotone, "pass": ok,
    })
    print(f"optimize: {_verdict(ok)}  t_stop={traj.times[-1]:.4g}  |x-x*|,|l-l*| max={gap:.3e}  "
          f"kkt=({stat:.1e}, {feas:.1e})")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_interconnect(cfg: RunConfig, out: str) -> int:
    """Couple two passive systems and check the joint supply inequality."""
    spec = cfg.section("interconnect")
    parts, certs, z0 = [], {}, []
    for key in ("first", "second"):
        sub = spec[key]
        bundle = build_model(sub["model"])
        metric_spec = sub.get("metric", {"kind": "default"})
        if "sampler" in sub:
            cert, Q = _certify(bundle, metric_spec, sub["sampler"], cfg)
            certs[key] = cert
        else:
            Q = resolve_metric(bundle, metric_spec)
        parts.append((bundle, Q))
        z0 += [_vector(sub["x0"], bundle.system.n, f"{key}.x0"), _vector(sub["u0"], bundle.system.m, f"{key}.u0")]
    _write_json(out, "certificate.json", {k: c.to_dict() for k, c in certs.items()})
    if not all(c.passed for c in certs.values()):
        failed = [k for k, c in certs.items() if not c.passed]
        _write_json(out, "report.json", {"command": "interconnect", "pass": False, "failed_certificates": failed})
        print(f"interconnect: FAIL  subsystem certificate failed: {', '.join(failed)}")
        return EXIT_FAIL
    (bA, QA), (bB, QB) = parts
    ic = interconnect(bA.system, QA, bB.system, QB)
    sim = cfg.section("sim")
    if "t_end" not in sim:
        raise ConfigError("sim.t_end is required")
    t_end, h = sim["t_end"], sim.get("h", CIRCUIT_STEP)
    signal = build_signal(sim.get("signal"), ic.system.m, t_end, h, cfg.seed)
    traj = integrate(ic, SimConfig(t_end, h, np.concatenate(z0), signal, sim.get("record_every", 1)))
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    rep = interconnection_dissipation(traj, cfg.tolerances.dissipation)
    _write_json(out, "report.json", {"command": "interconnect", "models": [bA.name, bB.name],
                                     "dissipation": rep.to_dict(), "pass": rep.passed})
    print(f"interconnect {bA.name}+{bB.name}: joint dissipation {_verdict(rep.passed)}  "
          f"min_residual={rep.min_residual:.3e}  tol={rep.tolerance:.3e}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


COMMANDS = {"check": cmd_check, "simulate": cmd_simulate, "control": cmd_control,
            "optimize": cmd_optimize, "interconnect": cmd_interconnect}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def make_parser():
    parser = _Parser(prog="krasovskii", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0])
        p.add_argument("--config", required=True, help="run configuration (JSON)")
        p.add_argument("--out", default=None, help="output directory (default: config 'out' or ./out)")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = RunConfig.from_doc(load(args.config), seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = cfg.out or "out"
    os.makedirs(out, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out)
    except (SimulationError, SolverError, ConvergenceError) as exc:
        diag = {"command": args.command, "pass": False, "error": type(exc).__name__, "message": str(exc),
                "time": getattr(exc, "time", None), "state": getattr(exc, "state", None)}
        _write_json(out, "report.json", diag)
        print(f"{args.command}: runtime fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (KrasovskiiError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
