"""Command-line entry point: ``wavegram <subcommand> --scenario FILE [options]``.

Exit status is 0 when the computation ran (whatever the verdict), 1 for a
bad scenario and 2 for a numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import Any, Optional

import numpy as np

from . import __version__
from . import cascade as cs
from . import ltv_control as lc
from . import normal_forms as nf
from . import observability as ob
from . import spectral as sp
from .errors import BadScenario, CriticalTimeNotFound, WavegramError
from .phase_flow import PhasePoint, grid_spacing, stack_points
from .scenario import Scenario, load

SUBCOMMANDS = ("gramian", "kappa", "tcrit", "brunovsky", "decompose", "cascade", "validate")
THREADS_ENV = "WAVEGRAM_THREADS"


def jsonable(obj: Any) -> Any:
    """Convert numbers, arrays and tuples into plain JSON values (infinities as strings)."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        z = complex(obj)
        return jsonable(z.real) if z.imag == 0 else [jsonable(z.real), jsonable(z.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, PhasePoint):
        return {"x": list(obj.x), "xi": list(obj.xi)}
    return obj


def dumps(report: dict) -> str:
    return json.dumps(jsonable(report), sort_keys=True, indent=2) + "\n"


def _point_row(r: ob.PointRow) -> dict:
    return {"rho": r.rho, "branch": "+" if r.branch > 0 else "-", "min_eig": r.min_eig, "verdict": r.verdict,
            "inferred": r.inferred}


def write_csv(path: str, rows: list[ob.PointRow], dim: int) -> None:
    header = [f"x{i}" for i in range(dim)] + [f"xi{i}" for i in range(dim)] + ["branch", "min_eig"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) for v in r.rho.x] + [repr(v) for v in r.rho.xi]
                       + ["+" if r.branch > 0 else "-", repr(r.min_eig)])


def _horizon(sc: Scenario, args) -> float:
    if args.T is not None:
        return float(args.T)
    if "T" in sc.run:
        return float(sc.run["T"])
    raise BadScenario("no horizon: pass --T or set run.T")


def _constant_matrix(table, rows, cols, name) -> np.ndarray:
    out = np.zeros((rows, cols))
    for i, row in enumerate(table):
        for j, f in enumerate(row):
            if f.is_zero:
                continue
            if not f.time_independent or type(f.spatial).__name__ != "Constant":
                raise BadScenario(f"{name} must have constant entries for this subcommand")
            v = complex(f.scale) * complex(f.spatial.value)
            if v.imag:
                raise BadScenario(f"{name} must be real")
            out[i, j] = v.real
    return out


def _constant_pair(sc: Scenario) -> tuple[np.ndarray, np.ndarray]:
    if sc.order_zero is None:
        raise BadScenario("this subcommand needs a zero-order scenario (symbols A, B)")
    z = sc.order_zero
    return _constant_matrix(z.A_field, z.N, z.N, "A"), _constant_matrix(z.B_field, z.N, z.K, "B")


# ---------------------------------------------------------------- subcommands


def cmd_gramian(sc: Scenario, args, osc: ob.ObservabilityScenario):
    T = _horizon(sc, args)
    res = ob.kappa(osc, T, refine=False)
    first = osc.sample()[0]
    G = {s: ob.branch_gramian(osc, first, s, T) for s in ("-", "+")}
    report = {
        "T": T,
        "point": first,
        "gramian_minus": G["-"].matrix,
        "gramian_plus": G["+"].matrix,
        "min_eig_minus": G["-"].min_eig,
        "min_eig_plus": G["+"].min_eig,
        "verdict_minus": G["-"].verdict,
        "verdict_plus": G["+"].verdict,
        "min_over_sample": res.kappa,
    }
    return report, res.table


def cmd_kappa(sc: Scenario, args, osc):
    T = _horizon(sc, args)
    res = ob.kappa(osc, T)
    ucp = ob.ucp_status(osc)
    report = {
        "T": T,
        "kappa": res.kappa,
        "c_obs": res.c_obs,
        "worst_point": _point_row(res.worst),
        "worst_eigvec": res.worst.eigvec,
        "indeterminate_points": res.indeterminate,
        "points": len(res.table),
        "ucp_status": ucp if isinstance(ucp, str) else vars(ucp),
        "criterion": "min_eig (vanishes together with the determinant for PSD matrices)",
        "kappa_is_upper_bound": True,
    }
    return report, res.table


def cmd_tcrit(sc: Scenario, args, osc):
    T_hi = osc.T_max
    tol = args.tol if args.tol is not None else float(sc.run["tol"])
    T_lo = min(tol, 0.5 * T_hi)
    try:
        c = ob.t_crit(osc, T_lo, T_hi, tol)
        report = {"t_crit": c.t_crit, "bracket": c.bracket, "evaluations": c.evaluations, "found": True}
    except CriticalTimeNotFound as exc:
        report = {"t_crit": "NotFound", "bracket": None, "found": False, "reason": str(exc)}
    report.update(T_lo=T_lo, T_hi=T_hi, tol_T=tol, grid_step=_grid_step(osc))
    return report, None


def _grid_step(osc) -> float:
    return max(grid_spacing(osc.manifold, osc.n_x), osc.T_max / osc.n_steps)


def cmd_brunovsky(sc: Scenario, args, osc):
    A, B = _constant_pair(sc)
    f = nf.brunovsky(A, B)
    r = f.residuals(A, B)
    shapes = {str(t): nf.chain_shape_ok(f.A_t(A, B, t), f.d, True) for t in (0.0, 0.5, 1.0)}
    report = {
        "d": f.d,
        "Q": f.Q,
        "F": f.F,
        "M_u": f.M_u,
        "A_tilde": f.A_tilde,
        "B_tilde": f.B_tilde,
        "residual_A": r["A"],
        "residual_B": r["B"],
        "A_t_shape_ok": shapes,
        "tilde_controllable": lc.kalman_rank(f.A_tilde, f.B_tilde)[1],
    }
    return report, None


def cmd_decompose(sc: Scenario, args, osc):
    if sc.order_zero is None:
        raise BadScenario("decompose needs a zero-order scenario (symbols A, B)")
    z = sc.order_zero
    x, _ = stack_points(osc.sample())
    As = z.eval_A(sc.manifold, x)
    Bs = z.eval_B(sc.manifold, x)
    if np.max(np.abs(As.imag), initial=0) == 0 and np.max(np.abs(Bs.imag), initial=0) == 0:
        As, Bs = As.real, Bs.real
    tol = args.tol if args.tol is not None else lc.RANK_REL
    dec = nf.subdiagonal_decomposition(list(As), list(Bs), tol)
    report = {"k": dec.k, "d": dec.d, "reachable": dec.reachable, "change_of_basis": dec.change_of_basis,
              "tol": tol, "samples": len(As)}
    if dec.reachable:
        P = dec.change_of_basis
        A_new = P.conj().T @ As[0] @ P
        A_sub, A_r = nf.split_sub_r(A_new, dec.d)
        space = nf.multilevel_space(dec.d, 1)
        report.update(A_sub_first_sample=A_sub, A_r_first_sample=A_r, energy_space_exponents=space.exponents,
                      multiplicities=space.multiplicities)
    return report, None


def cmd_cascade(sc: Scenario, args, osc):
    if sc.alpha is None:
        raise BadScenario("cascade needs a cascade section with alpha and beta")
    T = _horizon(sc, args)
    pair = cs.CascadePair(sc.alpha, sc.beta)
    rows, all_agree, all_hold = [], True, True
    for p in osc.sample():
        v = cs.cascade_gramian_equiv(pair, sc.manifold, p, T, osc.n_steps)
        all_agree &= v.agreement
        all_hold &= v.condition3
        rows.append({"rho": p, "condition": v.condition3, "witness": v.witness, "gramian_positive":
                     v.gramian_positive, "min_eig": v.min_eig, "indeterminate": v.indeterminate,
                     "agreement": v.agreement})
    report = {"T": T, "all_agree": all_agree, "condition_everywhere": all_hold, "points": rows}
    if sc.alpha.time_independent and sc.beta.time_independent:
        sign = nf.beta_sign(sc.beta, sc.manifold)
        report["beta_sign"] = sign
        try:
            report["t_omega_o_omega"] = cs.t_omega_o_omega(sc.alpha, sc.beta, sc.manifold, osc.sample(), osc.T_max,
                                                           tol=float(sc.run["tol"]))
        except CriticalTimeNotFound as exc:
            report["t_omega_o_omega"] = "NotFound"
            report["t_omega_o_omega_reason"] = str(exc)
    return report, None


def cmd_validate(sc: Scenario, args, osc):
    m = sc.manifold
    opts = sc.run.get("validate", {})
    ks = opts.get("k", [32, 128])
    dt = float(opts.get("dt", 5e-4))
    T = _horizon(sc, args)
    rho = osc.sample()[0]
    rng = np.random.default_rng(int(sc.run["seed"]))
    M0 = 32
    state = sp.SpectralState(M0, *(_low_modes(rng, sc.N, M0) for _ in range(2)), m)
    traj = sp.evolve(state, None, 1.0, 1e-3, save_every=1000)
    drift = abs(traj.energy[-1] - traj.energy[0]) / traj.energy[0]
    ratios = []
    for k in ks:
        M = int(opts.get("M", 4 * max(ks)))
        P = np.zeros(sc.N)
        P[0] = 1.0
        r = sp.symbol_ratio(osc, rho, P, T, float(k), dt, M=M)
        ratios.append({"k": k, "ratio": r.ratio, "numerator": r.numerator, "denominator": r.denominator})
    report = {"energy_drift": drift, "halfwave_gap": sp.halfwave_norm_gap(state), "ratios": ratios,
              "point": rho, "T": T, "dt": dt}
    if sc.order_zero is not None:
        report["discrete_ucp"] = _discrete_ucp(sc, int(opts.get("ucp_M", 64)))
    return report, None


def _discrete_ucp(sc: Scenario, M: int):
    """Screen with constant ``A`` and ``B = B0 chi(x)``; anything else is not applicable."""
    z = sc.order_zero
    try:
        A = _constant_matrix(z.A_field, z.N, z.N, "A")
    except BadScenario:
        return "NotApplicable"
    sep = ob.separate_fields(z.B_field)
    if sep is None:
        return "NotApplicable"
    B0, chi = sep
    ucp = sp.discrete_ucp(A, B0, chi, M, sc.manifold)
    return {"verdict": ucp.verdict, "M": ucp.M, "residual_floor": ucp.residual_floor}


def _low_modes(rng, N: int, M: int, top: int = 8) -> np.ndarray:
    c = np.zeros((N, 2 * M + 1), dtype=complex)
    c[:, M - top : M + top + 1] = rng.standard_normal((N, 2 * top + 1)) + 1j * rng.standard_normal((N, 2 * top + 1))
    return c


COMMANDS = {
    "gramian": cmd_gramian,
    "kappa": cmd_kappa,
    "tcrit": cmd_tcrit,
    "brunovsky": cmd_brunovsky,
    "decompose": cmd_decompose,
    "cascade": cmd_cascade,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wavegram", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    p.add_argument("--T", type=float, default=None, help="horizon (overrides run.T)")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--csv", default=None, help="per-point table (x, xi, branch, min_eig)")
    p.add_argument("--tol", type=float, default=None, help="bisection / rank tolerance override")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (default ${THREADS_ENV} or 1)")
    return p


def resolve_threads(flag: Optional[int]) -> int:
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load(args.scenario)
        osc = sc.observability(resolve_threads(args.threads))
    except (WavegramError, ValueError) as exc:
        print(f"wavegram: bad scenario: {exc}", file=sys.stderr)
        return 1
    try:
        body, rows = COMMANDS[args.subcommand](sc, args, osc)
    except BadScenario as exc:
        print(f"wavegram: bad scenario: {exc}", file=sys.stderr)
        return 1
    except (WavegramError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"wavegram: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    report = {
        "subcommand": args.subcommand,
        "result": body,
        "metadata": {
            "version": __version__,
            "scenario_sha256": sc.sha256,
            "grid": {"n_x": osc.n_x, "n_dir": osc.n_dir, "n_steps": osc.n_steps, "T_max": osc.T_max},
            "tolerances": {
                "positive_rel": lc.POSITIVE_REL,
                "singular_rel": lc.SINGULAR_REL,
                "rank_rel": lc.RANK_REL,
                "nonzero_rel": cs.NONZERO_REL,
                "tol": args.tol if args.tol is not None else sc.run["tol"],
            },
        },
    }
    text = dumps(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.csv and rows is not None:
        write_csv(args.csv, rows, sc.manifold.coord_dim)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
