"""Command-line front end.

Exit codes: 0 success, 1 analysis or check failure, 2 input error,
3 resource bound exceeded.  With ``--out DIR`` every command writes its
data files plus ``manifest.json`` into DIR; otherwise data go to stdout.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import blume_capel as bc
from . import capacity as cp
from . import landscape as ls
from . import markov as mk
from . import polyomino as po

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3


class InputError(Exception):
    pass


def parse_betas(text: str) -> list[float]:
    """``start:stop:step`` (both ends inclusive within 1e-12) or a comma list."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise InputError(f"bad beta grid {text!r}")
            n = int(math.floor((stop - start) / step + 1e-12)) + 1
            return [start + i * step for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise InputError(f"bad beta grid {text!r}") from None


def _states(text: str | None) -> list[int]:
    if text is None:
        return []
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise InputError(f"bad state list {text!r}") from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Output:
    """Collects named data files; writes them with a manifest or prints."""

    def __init__(self, args, command: str, inputs=()):
        self.args = args
        self.command = command
        self.inputs = list(inputs)
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def manifest(self) -> dict:
        params = {k: v for k, v in sorted(vars(self.args).items()) if k not in ("func", "out")}
        digests = {}
        for p in self.inputs:
            digests[str(p)] = hashlib.sha256(Path(p).read_bytes()).hexdigest()
        return {"command": self.command, "parameters": params, "seed": params.get("seed"),
                "version": __version__, "inputs": digests,
                "files": sorted(self.files),
                "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}

    def flush(self):
        out = getattr(self.args, "out", None)
        if out:
            d = Path(out)
            d.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (d / name).write_text(text, encoding="utf-8")
            (d / "manifest.json").write_text(_dumps(self.manifest()), encoding="utf-8")
        else:
            for name, text in self.files.items():
                if len(self.files) > 1:
                    sys.stdout.write(f"# {name}\n")
                sys.stdout.write(text)


def _load(path) -> ls.EnergyLandscape:
    try:
        return ls.load_landscape(path)
    except OSError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------
# landscape commands


def cmd_validate(args) -> int:
    land = _load(args.file)
    rep = ls.validate_landscape(land)
    out = Output(args, "validate", [args.file])
    out.add("validation.json", _dumps(rep.to_dict()))
    out.flush()
    if not rep.passed:
        for m in rep.messages:
            print(m, file=sys.stderr)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_analyze(args) -> int:
    land = _load(args.file)
    rep = ls.validate_landscape(land)
    if not rep.passed:
        print("; ".join(rep.messages), file=sys.stderr)
        return EXIT_FAIL
    report = ls.relaxation_analysis(land)
    doc = report.to_dict()
    ok = True
    if not report.trivial:
        v = ls.verify_necessity(land, report)
        doc["necessity"] = {"passed": v.passed, "clause": v.clause, "violator": v.violator}
        ok &= v.passed
        try:
            cand = ls.pta_candidate_set(report)
            doc["pta_candidate_set"] = {"states": cand.states, "choice_count": cand.choice_count}
        except ls.LandscapeError as exc:
            doc["pta_candidate_set"] = {"error": str(exc)}
    if args.oracle:
        brute = ls.relaxation_bruteforce(land)
        agree = report.agrees_with(brute)
        doc["oracle_agrees"] = agree
        ok &= agree
    if args.gates:
        a, b = args.gates
        gates = ls.minimal_gates(land, a, b, max_saddles=args.max_saddles)
        doc["gates"] = {"pair": [a, b], "minimal_gates": gates,
                        "essential_saddles": ls.essential_saddles(gates),
                        "saddles": ls.optimal_saddles(land, a, b)}
    out = Output(args, "analyze", [args.file])
    out.add("analysis.json", _dumps(doc))
    out.flush()
    return EXIT_OK if ok else EXIT_FAIL


def _q_spec(text: str):
    if text == "uniform":
        return "uniform"
    try:
        return float(text)
    except ValueError:
        raise InputError(f"bad q spec {text!r}") from None


def cmd_capacity(args) -> int:
    land = _load(args.file)
    A, B = _states(args.A), _states(args.B)
    if not A or not B:
        raise InputError("--A and --B are required")
    betas = parse_betas(args.betas)
    q = _q_spec(args.q)
    out = Output(args, "capacity", [args.file])
    ok = True
    probe = cp.easy_bounds_probe(land, q, A, B, betas)
    out.add("easy_bounds.csv", probe.to_csv())
    rows = ["beta,capacity,log_capacity,potential_residual"]
    for beta in betas:
        chain = cp.build_chain(land, q, beta)
        chk = cp.equilibrium_potential(chain, A, B, cross_check=True)
        lc = cp.log_capacity(chain, A, B)
        ok &= chk.ok
        rows.append(f"{beta:.12g},{math.exp(lc):.17g},{lc:.17g},{chk.residual:.3e}")
    out.add("capacity.csv", "\n".join(rows) + "\n")
    summary = {"phi": probe.phi, "g_min": probe.g_min, "g_max": probe.g_max,
               "final_log_slope": probe.final_slope, "bounded": probe.bounded,
               "potential_check_ok": ok}
    if args.M:
        dec = cp.pta_decay(land, q, _states(args.M), betas)
        summary["pta"] = {"M": _states(args.M), "log_ratio": dec.log_ratio.tolist(),
                          "slope": dec.slope, "decays": dec.decays}
    out.add("capacity_summary.json", _dumps(summary))
    out.flush()
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------
# Blume-Capel commands


def _params(args) -> bc.ModelParams:
    if args.L is None:
        raise InputError("--L is required")
    try:
        return bc.ModelParams(args.L, args.h, args.lam)
    except bc.BlumeCapelError as exc:
        raise InputError(str(exc)) from None


def cmd_bc_quantities(args) -> int:
    p = _params(args)
    q = bc.critical_quantities(p)
    doc = q.to_dict()
    doc.update({"L": args.L, "h": args.h})
    out = Output(args, "bc quantities")
    out.add("quantities.json", _dumps(doc))
    out.flush()
    return EXIT_OK


def _gate_configs(tl: bc.TorusLandscape, gates) -> list[str]:
    return [bc.to_text(tl.config_of(x)) for x in ls.essential_saddles(gates)]


def cmd_bc_exact(args) -> int:
    p = _params(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tl = bc.enumerate_torus(p, memory_budget=args.memory_budget)
    land = tl.landscape
    report = ls.relaxation_analysis(land)
    d, z, u = (tl.uniform_state(s) for s in (-1, 0, 1))
    doc = {"L": p.L, "h": p.h, "lambda": p.lam, "n_states": land.n_states,
           "n_edges": land.n_edges, "condition": p.condition.to_dict(),
           "gamma_m": report.gamma_m,
           "metastable_set": [bc.to_text(tl.config_of(x)) for x in report.metastable_set],
           "ground_states": [bc.to_text(tl.config_of(x)) for x in report.ground_states],
           "energies": {"d": float(land.energy[d]), "0": float(land.energy[z]),
                        "u": float(land.energy[u])}}
    ok = True
    if not report.trivial:
        v = ls.verify_necessity(land, report)
        doc["necessity_passed"] = v.passed
        ok &= v.passed
    if args.oracle:
        agree = report.agrees_with(ls.relaxation_bruteforce(land))
        doc["oracle_agrees"] = agree
        ok &= agree
    phi = ls.communication_height(land, d, u)
    saddles = ls.optimal_saddles(land, d, u)
    gates = ls.minimal_gates(land, d, u, max_saddles=args.max_saddles)
    doc["pair_d_u"] = {"barrier": phi - float(land.energy[d]), "n_saddles": len(saddles),
                       "minimal_gate_sizes": [len(g) for g in gates],
                       "essential_saddles": _gate_configs(tl, gates)}
    out = Output(args, "bc exact")
    out.add("exact.json", _dumps(doc))
    if args.export:
        out.add("landscape.txt", ls.format_landscape(land))
    out.flush()
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bc_path(args) -> int:
    p = _params(args)
    rp = bc.reference_path(p)
    lc = bc.critical_length(p.h)
    e = rp.energies
    rows = ["step,site,spin,energy,excess"]
    for k in range(len(rp)):
        site, spin = rp.flips[k - 1] if k else (-1, -1)
        base = e[0] if k <= rp.zero_index else e[rp.zero_index]  # excess over d, then over 0
        rows.append(f"{k},{site},{spin},{e[k]:.12f},{e[k] - base:.12f}")
    leg1 = e[: rp.zero_index + 1] - e[0]
    leg2 = e[rp.zero_index:] - e[rp.zero_index]
    i1, i2 = int(np.argmax(leg1)), rp.zero_index + int(np.argmax(leg2))
    doc = {"L": p.L, "h": p.h, "lc": lc, "gamma_c": bc.critical_quantities(p).gamma_c,
           "leg1_max": float(leg1.max()), "leg1_argmax": i1,
           "leg1_max_count": int(np.sum(np.abs(leg1 - leg1.max()) <= 1e-9)),
           "leg1_max_is_P_c": bc.is_critical_droplet(rp.config_at(i1), p, "P_c"),
           "leg2_max": float(leg2.max()), "leg2_argmax": i2,
           "leg2_max_count": int(np.sum(np.abs(leg2 - leg2.max()) <= 1e-9)),
           "leg2_max_is_Q_c": bc.is_critical_droplet(rp.config_at(i2), p, "Q_c"),
           "first_step_costs": [float(x) for x in rp.step_costs()[:2]],
           "condition": p.condition.to_dict()}
    out = Output(args, "bc path")
    out.add("path_profile.csv", "\n".join(rows) + "\n")
    out.add("path_summary.json", _dumps(doc))
    out.flush()
    return EXIT_OK


def cmd_bc_sim(args) -> int:
    p = _params(args)
    model = mk.BlumeCapelModel(p)
    cfg = mk.SimConfig(parse_betas(args.betas), args.replicas, args.seed, args.cap)
    stats = mk.exit_time_experiment(model, bc.uniform(p, -1), [bc.uniform(p, 1)], cfg)
    out = Output(args, "bc sim")
    out.add("exit_times.csv", stats.to_csv())
    summary = stats.summary()
    summary["condition"] = p.condition.to_dict()
    out.add("exit_summary.json", _dumps(summary))
    out.flush()
    return EXIT_OK


def _gate_set(p: bc.ModelParams, source: str, memory_budget: int, max_saddles: int):
    if source == "droplet":
        lc = bc.critical_length(p.h)
        return [bc.droplet_config(s, p) for s in bc.all_droplet_specs(p.L, lc)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tl = bc.enumerate_torus(p, memory_budget=memory_budget)
    d, u = tl.uniform_state(-1), tl.uniform_state(1)
    gates = ls.minimal_gates(tl.landscape, d, u, max_saddles=max_saddles)
    return [tl.config_of(x) for x in ls.essential_saddles(gates)]


def cmd_bc_gate(args) -> int:
    p = _params(args)
    model = mk.BlumeCapelModel(p)
    source = args.gate_source or ("enumerated" if p.L <= 3 else "droplet")
    gate = model.config_set(_gate_set(p, source, args.memory_budget, args.max_saddles))
    cap = args.cap if args.cap else mk.DEFAULT_CAP
    rows = []
    for bi, beta in enumerate(parse_betas(args.betas)):
        rows.append(mk.gate_passage_experiment(model, bc.uniform(p, -1), gate, [bc.uniform(p, 1)],
                                               beta, args.replicas, args.seed, cap, beta_index=bi))
    out = Output(args, "bc gate")
    out.add("gate_passage.csv", mk.gate_passage_csv(rows))
    out.add("gate_summary.json", _dumps({"gate_source": source, "gate_size": gate.size,
                                         "condition": p.condition.to_dict()}))
    out.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------
# polyominoes


def cmd_poly(args) -> int:
    n = args.n
    if n <= 0:
        raise InputError("area must be positive")
    ms = po.minimal_shape(n)
    doc = {"n": n, "case": ms.case, "s": ms.s, "k": ms.k, "min_perimeter": ms.min_perimeter,
           "perimeter": ms.polyomino.perimeter, "cells": json.loads(ms.polyomino.to_json()),
           "ascii": ms.polyomino.ascii()}
    if args.enumerate:
        if n > po.MAX_ENUMERATION:
            raise InputError(f"enumeration bound: n <= {po.MAX_ENUMERATION}")
        polys = list(po.enumerate_exhaustive(n, connected=not args.disconnected))
        best = min(x.perimeter for x in polys)
        minimizers = [x for x in polys if x.perimeter == best]
        doc["enumeration"] = {"count": len(polys), "min_perimeter": best,
                              "n_minimizers": len(minimizers),
                              "all_minimizers_connected_convex": all(
                                  po.is_connected(x) and po.is_convex(x) for x in minimizers)}
    out = Output(args, "poly")
    if args.format == "ascii":
        out.add("poly.txt", ms.polyomino.ascii() + "\n")
    else:
        out.add("poly.json", _dumps(doc))
    out.flush()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metaland", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="directory for data files and manifest")
        p.add_argument("--format", choices=["json", "csv", "ascii"], default="json")

    p = sub.add_parser("validate", help="check a landscape file")
    p.add_argument("file")
    common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("analyze", help="relaxation analysis of a landscape file")
    p.add_argument("file")
    p.add_argument("--oracle", action="store_true", help="cross-run the brute-force oracle")
    p.add_argument("--gates", nargs=2, type=int, metavar=("A", "B"))
    p.add_argument("--max-saddles", type=int, default=25)
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("capacity", help="capacities and bounds over a beta grid")
    p.add_argument("file")
    p.add_argument("--A", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--M", help="candidate metastable set for the ratio decay")
    p.add_argument("--betas", default="1:10:1")
    p.add_argument("--q", default="uniform")
    common(p)
    p.set_defaults(func=cmd_capacity)

    bcp = sub.add_parser("bc", help="Blume-Capel model")
    bsub = bcp.add_subparsers(dest="bc_command", required=True)

    def model(p, L_default=None):
        p.add_argument("--h", type=float, required=True)
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)
        p.add_argument("--L", type=int, default=L_default)
        common(p)

    p = bsub.add_parser("quantities")
    model(p, 15)
    p.set_defaults(func=cmd_bc_quantities)

    p = bsub.add_parser("exact")
    model(p, 3)
    p.add_argument("--memory-budget", type=int, default=2 * 1024 ** 3)
    p.add_argument("--max-saddles", type=int, default=100)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--export", action="store_true", help="also write the landscape file")
    p.set_defaults(func=cmd_bc_exact)

    p = bsub.add_parser("path")
    model(p, 15)
    p.set_defaults(func=cmd_bc_path)

    p = bsub.add_parser("sim")
    model(p, 3)
    p.add_argument("--betas", default="1.0:2.0:0.25")
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--cap", type=int)
    p.set_defaults(func=cmd_bc_sim)

    p = bsub.add_parser("gate")
    model(p, 3)
    p.add_argument("--betas", default="3.0")
    p.add_argument("--replicas", type=int, default=200)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--cap", type=int)
    p.add_argument("--gate-source", choices=["enumerated", "droplet"])
    p.add_argument("--memory-budget", type=int, default=2 * 1024 ** 3)
    p.add_argument("--max-saddles", type=int, default=100)
    p.set_defaults(func=cmd_bc_gate)

    p = sub.add_parser("poly", help="minimal polyomino of area n")
    p.add_argument("n", type=int)
    p.add_argument("--enumerate", action="store_true")
    p.add_argument("--disconnected", action="store_true")
    common(p)
    p.set_defaults(func=cmd_poly)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (bc.MemoryBudgetError, ls.EnumerationBoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InputError, ls.LandscapeParseError, bc.BlumeCapelError, po.PolyominoError,
            mk.SimulationError, ls.LandscapeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
