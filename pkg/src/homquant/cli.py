"""Command-line front end: ``homquant {synthesize,verify,quantize-demo,simulate,sweep}``.

Every command reads one JSON run config (``--config``; the built-in 3-state
chain scenario when omitted), applies flag overrides, and stamps the hash of
the resolved config into everything it writes.  Exit codes: 0 success, 1 bad
input, 2 infeasible / not certified, 3 divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import scenarios
from .errors import (
    BudgetTooSmallError,
    DivergenceError,
    HomQuantError,
    InfeasibleError,
    NotCertifiedError,
)
from .quantizer import SphericalQuantizer, budget_to_resolution, quantize_batch
from .simulator import PerturbationSpec, SimulationConfig, integrate, summary
from .synthesis import (
    PlantModel,
    certificate_from_dict,
    certificate_to_dict,
    matched_gain_scale,
    maximize_decay_rate,
    solve_gain_lmi,
    solve_homogenization,
)

log = logging.getLogger("homquant")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_DIVERGED = 3

DEFAULT_CONFIG = {
    "plant": {"A": scenarios.CHAIN_A.tolist(), "B": scenarios.CHAIN_B.tolist()},
    "mu": -1.0,
    "delta": scenarios.CHAIN_DELTA,
    "tau": scenarios.CHAIN_TAU,
    "synthesis": {"objective": "robust", "restarts": 5},
    "quantizer": {"N": 512, "m": None, "floor_mode": True},
    "simulation": {
        "x0": scenarios.CHAIN_X0.tolist(),
        "t_end": 20.0,
        "h": 1e-4,
        "perturbation": {"kind": "matched-sinusoid", "amplitude": 0.2, "frequency": 1.0},
        "decimation": 100,
    },
    "sweep": {"N": [64, 128, 256, 512, 1024], "jobs": 1},
    "demo": {"samples": 5},
    "seed": 0,
}


class UsageError(HomQuantError):
    pass


# ---------------------------------------------------------------------------
# config handling


def _merge(base, patch):
    out = copy.deepcopy(base)
    for key, val in patch.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = val
    return out


def load_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise UsageError("config must be a JSON object")
        cfg = _merge(cfg, doc)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.delta is not None:
        cfg["delta"] = args.delta
        cfg["tau"] = None
    if args.bits is not None:
        cfg["quantizer"]["N"] = 2**args.bits
        cfg["quantizer"]["m"] = None
    if args.floor_mode is not None:
        cfg["quantizer"]["floor_mode"] = args.floor_mode == "on"
    if args.h is not None:
        cfg["simulation"]["h"] = args.h
    if args.t_end is not None:
        cfg["simulation"]["t_end"] = args.t_end
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        A = np.atleast_2d(np.array(cfg["plant"]["A"], float))
        B = np.array(cfg["plant"]["B"], float)
        delta = float(cfg["delta"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed plant block: {exc}") from exc
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise UsageError(f"A is {A.shape} but B is {B.shape}")
    if not 0.0 < delta < 1.0:
        raise UsageError(f"delta must lie in (0, 1), got {delta}")
    x0 = cfg["simulation"].get("x0")
    if x0 is not None and len(x0) != n:
        raise UsageError(f"x0 has {len(x0)} entries, the plant has {n} states")
    if cfg["synthesis"].get("objective") not in ("margin", "robust"):
        raise UsageError("synthesis.objective must be 'margin' or 'robust'")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _plant(cfg):
    B = np.array(cfg["plant"]["B"], float)
    if B.ndim == 1:
        B = B[:, None]
    return PlantModel(np.atleast_2d(np.array(cfg["plant"]["A"], float)), B)


def _perturbation(cfg) -> PerturbationSpec:
    doc = dict(cfg["simulation"].get("perturbation") or {"kind": "none"})
    for key in ("direction", "table_t"):
        if doc.get(key) is not None:
            doc[key] = tuple(doc[key])
    if doc.get("table_g") is not None:
        doc["table_g"] = tuple(tuple(r) for r in doc["table_g"])
    try:
        return PerturbationSpec(**doc)
    except TypeError as exc:
        raise UsageError(f"bad perturbation block: {exc}") from exc


def _synthesize(cfg):
    plant = _plant(cfg)
    hom = solve_homogenization(plant, float(cfg["mu"]))
    A0 = hom.closed(plant)
    delta = float(cfg["delta"])
    tau = cfg.get("tau")
    syn = cfg["synthesis"]
    if syn["objective"] == "margin":
        cert = solve_gain_lmi(A0, plant.B, hom.Gd, delta, tau, seed=int(cfg["seed"]),
                              restarts=int(syn.get("restarts", 5)))
    else:
        cert = maximize_decay_rate(A0, plant.B, hom.Gd, delta, 1.0 / delta if tau is None else float(tau),
                                   seed=int(cfg["seed"]))
        pert = _perturbation(cfg)
        if pert.kind == "matched-sinusoid" and pert.amplitude > 0:
            amp = pert.amplitude * np.linalg.norm(np.ones(plant.m) if pert.direction is None else pert.direction)
            cert = cert.rescaled(matched_gain_scale(cert, plant.B, amp))
    return plant, hom, cert


def _load_certificate(path, cfg=None, delta=None, tau=None):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read certificate {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("certificate must be a JSON object")
    return certificate_from_dict(doc, delta, tau)


def _certificate(cfg, args):
    if getattr(args, "certificate", None):
        return _load_certificate(args.certificate)
    return _synthesize(cfg)


def _quantizer(cfg, n, P, N=None):
    q = cfg["quantizer"]
    if N is None and q.get("m"):
        return SphericalQuantizer.from_bins(n, int(q["m"]), P)
    return SphericalQuantizer.from_budget(n, int(N if N is not None else q["N"]), P, bool(q["floor_mode"]))


def _sim_config(cfg, plant, hom, cert, q):
    sim = cfg["simulation"]
    return SimulationConfig(
        plant, hom, cert, q, np.array(sim["x0"], float),
        t_end=float(sim["t_end"]), h=float(sim["h"]),
        perturbation=_perturbation(cfg),
        record_every=int(sim.get("record_every", 1)),
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize(args) -> int:
    cfg = load_config(args)
    h = config_hash(cfg)
    try:
        plant, hom, cert = _synthesize(cfg)
    except InfeasibleError as exc:
        print(f"infeasible: {exc} (best margin {exc.best_margin:.3e})", file=sys.stderr)
        return EXIT_INFEASIBLE
    doc = certificate_to_dict(plant, hom, cert)
    doc["config_hash"] = h
    doc["objective"] = cfg["synthesis"]["objective"]
    path = _out_dir(args) / "certificate.json"
    _write_json(path, doc)
    print(f"certificate written to {path}")
    _print_margins(cert)
    return EXIT_OK if cert.certified else EXIT_INFEASIBLE


def _print_margins(cert, W_norm=None):
    print(f"margin_mono   = {cert.margin_mono:.6e}")
    print(f"margin_posdef = {cert.margin_posdef:.6e}")
    print(f"margin_W      = {cert.margin_W:.6e}")
    print(f"rho           = {cert.rho:.6e}")
    if W_norm is not None:
        print(f"slack lambda_max(W)/||W||_2 = {cert.margin_W / W_norm:.3e} (stored values may be rounded)")
    print("certified" if cert.certified else "NOT certified")


def cmd_verify(args) -> int:
    from .synthesis import assemble_W

    plant, hom, cert = _load_certificate(args.certificate, delta=args.delta, tau=args.tau)
    W = assemble_W(hom.closed(plant), plant.B, cert.P, cert.K, cert.delta, cert.tau)
    _print_margins(cert, np.linalg.norm(W, 2))
    return EXIT_OK if cert.certified else EXIT_INFEASIBLE


def cmd_quantize_demo(args) -> int:
    cfg = load_config(args)
    plant, hom, cert = _certificate(cfg, args)
    q = _quantizer(cfg, plant.n, cert.P)
    from .dilation import Dilation

    d = Dilation(hom.Gd, cert.P)
    states = cfg["demo"].get("states")
    if states is None:
        rng = np.random.default_rng(int(cfg["seed"]))
        states = rng.normal(size=(int(cfg["demo"]["samples"]), plant.n))
    X = np.atleast_2d(np.array(states, float))
    idx, seeds = quantize_batch(q, d, X)
    print(f"# config_hash={config_hash(cfg)} n={q.dim} N={q.budget} m={q.m} "
          f"seeds={q.seed_count} bits={q.bits} delta_N={q.delta_N:.6f}")
    for x, i, s in zip(X, idx, seeds):
        code = q.encode(int(i))
        print(f"x={np.array2string(x, precision=5)} index={int(i)} code={code} "
              f"seed={np.array2string(s, precision=5)}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args)
    h = config_hash(cfg)
    plant, hom, cert = _certificate(cfg, args)
    if not cert.certified:
        print("warning: certificate is not certified; running anyway", file=sys.stderr)
    q = _quantizer(cfg, plant.n, cert.P)
    sim = _sim_config(cfg, plant, hom, cert, q)
    traj = integrate(sim)
    out = _out_dir(args)
    with open(out / "trajectory.csv", "w", newline="") as fh:
        traj.to_csv(fh, int(cfg["simulation"].get("decimation", 1)), comment=f"config_hash={h}")
    doc = summary(traj, cert.rho)
    doc.update(config_hash=h, delta_N=q.delta_N, m=q.m, N=q.budget, rho=cert.rho)
    _write_json(out / "summary.json", doc)
    print(f"settling_time = {doc['settling_time']}")
    print(f"outputs in {out}")
    return EXIT_OK


def _sweep_row(task):
    cfg, N, plant_doc = task
    plant, hom, cert = certificate_from_dict(plant_doc)
    n = plant.n
    try:
        res = budget_to_resolution(n, N, bool(cfg["quantizer"]["floor_mode"]))
    except BudgetTooSmallError:
        return [N, "", "", "budget-too-small", "", ""]
    if res.delta_N >= cert.delta:
        return [N, res.m, repr(res.delta_N), "no", repr(cert.rho), ""]
    q = _quantizer(cfg, n, cert.P, N)
    try:
        traj = integrate(_sim_config(cfg, plant, hom, cert, q))
        T = traj.settling_time
    except DivergenceError:
        T = None
    return [N, res.m, repr(res.delta_N), "yes", repr(cert.rho), "" if T is None else repr(T)]


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    if args.budgets:
        cfg["sweep"]["N"] = [int(v) for v in args.budgets.split(",")]
    h = config_hash(cfg)
    plant, hom, cert = _certificate(cfg, args)
    doc = certificate_to_dict(plant, hom, cert)
    tasks = [(cfg, int(N), doc) for N in cfg["sweep"]["N"]]
    jobs = int(cfg["sweep"].get("jobs", 1))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    path = _out_dir(args) / "sweep.csv"
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "m", "delta_N", "feasible", "rho", "settling_time"])
        w.writerows(rows)
    print(path.read_text(), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--delta", type=float, help="quantizer error budget in (0, 1)")
    common.add_argument("--bits", type=int, help="bit budget b; seed budget N = 2**b")
    common.add_argument("--floor-mode", choices=("on", "off"))
    common.add_argument("--h", type=float, help="RK4 step")
    common.add_argument("--t-end", type=float, help="simulation horizon")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="homquant", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common], help="solve the gain LMI, write certificate.json")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("verify", parents=[common], help="recheck a certificate file")
    s.add_argument("certificate")
    s.add_argument("--tau", type=float)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("quantize-demo", parents=[common], help="print seeds and codes for sample states")
    s.add_argument("--certificate")
    s.set_defaults(func=cmd_quantize_demo)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop run, writes CSV and summary JSON")
    s.add_argument("--certificate")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", parents=[common], help="delta_N / feasibility / settling over budgets")
    s.add_argument("--certificate")
    s.add_argument("--budgets", help="comma-separated seed budgets N")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NotCertifiedError as exc:
        print(f"not certified: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergenceError as exc:
        print(f"diverged at t={exc.time}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (HomQuantError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
