"""Command-line front end.

Exit codes: 0 success, 1 when a checking command finds a violation, 2 on
input errors.  Checking commands and what counts as a violation:

  lhv         partial-collapse residual >= 1e-6 ("configuration-space")
  miss-split  split identity off by more than --tol
  infoflow    a parameter direction moves the marginal but no licensed amplitude
  paths       with --verify, path sums differ from the state vector by > --tol
  nosignal    an external unitary after the last coupling moves the marginal
  bohm        an equivariance test fails

``simulate`` and ``marginals`` only report.  Circuits are files in the
circuit language or one of the bundled names ``@fig1``, ``@fig2``, ``@fig3``;
scenarios may be ``@bohm_free``, ``@bohm_coulomb``, ``@bohm_branches`` or
``@bohm_overlap``.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from datetime import datetime, timezone
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import __version__
from .bohm.pde import InstabilityError
from .bohm.scenario import ScenarioError, load_scenario, parse_scenario, run_scenario
from .circuits import bell_circuit
from .dsl import DslError, parse_circuit
from .info_flow import bell_scenario, hypothesis_violation_search, licensed_coefficients
from .lhv import entanglement_entropy, miss_split, partial_collapse_model
from .paths import (
    PathLimitError,
    classify_interference,
    marginal_via_paths,
    path_count,
    remnant_invariance_check,
    verify_against_state_vector,
    verify_marginal,
)
from .probability import as_subsystem, joint_distribution, marginal, marginals_by_layer, no_signaling_check
from .state_core import Circuit, CircuitError, ControlledPhaseGate, final_state

SCHEMA = "qmarginals.report/1"
EXIT_OK, EXIT_VIOLATION, EXIT_INPUT = 0, 1, 2
BUILTIN_CIRCUITS = ("fig1", "fig2", "fig3")
BUILTIN_SCENARIOS = ("bohm_free", "bohm_coulomb", "bohm_branches", "bohm_overlap")
INTERFERENCE_PATH_LIMIT = 4096


class InputError(Exception):
    pass


def _data(name: str) -> str:
    return (files("qmarginals") / "data" / name).read_text()


def load_circuit(ref: str) -> tuple[Circuit, str]:
    if ref.startswith("@"):
        name = ref[1:]
        if name not in BUILTIN_CIRCUITS:
            raise InputError(f"unknown bundled circuit {ref!r}; choose from {', '.join('@' + b for b in BUILTIN_CIRCUITS)}")
        return parse_circuit(_data(f"{name}.qc"), ref), ref
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read {ref}: {exc}") from None
    return parse_circuit(text, str(path)), str(path)


def load_scenario_ref(ref: str):
    if ref.startswith("@"):
        name = ref[1:]
        if name not in BUILTIN_SCENARIOS:
            raise InputError(f"unknown bundled scenario {ref!r}")
        return parse_scenario(json.loads(_data(f"{name}.json")), name)
    if not Path(ref).is_file():
        raise InputError(f"cannot read {ref}")
    return load_scenario(ref)


def _sub(text: str, n: int) -> tuple[int, ...]:
    try:
        idx = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise InputError(f"--sub expects comma-separated particle indices, got {text!r}") from None
    return as_subsystem(idx, n)


def _complex_list(a: np.ndarray) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(a).reshape(-1)]


# ---------------------------------------------------------------------------
# commands: each returns (inputs, results, exit code, summary lines)


def cmd_simulate(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    state = final_state(circuit)
    results = {
        "amplitudes": _complex_list(state.amplitudes),
        "joint": joint_distribution(state).as_dict(),
        "marginal": marginal(state, sub).as_dict(),
        "entanglement_entropy_bits": entanglement_entropy(state, sub),
    }
    lines = [f"joint {results['joint']}", f"marginal{list(sub)} {results['marginal']}"]
    return {"subsystem": list(sub)}, results, EXIT_OK, lines


def cmd_marginals(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    by_layer = [d.as_dict() for d in marginals_by_layer(circuit, sub)]
    results = {"by_layer": by_layer, "final": by_layer[-1]}
    lines = [f"after layer {k}: {d}" for k, d in enumerate(by_layer)]
    return {"subsystem": list(sub)}, results, EXIT_OK, lines


def cmd_lhv(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    dec = partial_collapse_model(circuit, sub)
    splits = [miss_split(circuit, i, sub).as_dict() for i in circuit.controlled_layers()]
    results = {**dec.as_dict(), "miss_splits": splits}
    code = EXIT_OK if dec.verdict == "local-interpretable" else EXIT_VIOLATION
    lines = [f"verdict {dec.verdict}", f"residual {dec.residual:.3e}", f"heuristic weights {dec.heuristic}"]
    lines += [f"miss-split at layer {s['gate_index']}: identity error {s['identity_violation']:.3e}" for s in splits]
    return {"subsystem": list(sub)}, results, code, lines


def cmd_miss_split(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    controlled = circuit.controlled_layers()
    if args.gate_index is None:
        if not controlled:
            raise InputError("circuit has no controlled-phase layer")
        gate = controlled[-1]
    else:
        gate = args.gate_index
    split = miss_split(circuit, gate, sub)
    tol = 1e-12 if args.tol is None else args.tol
    code = EXIT_OK if split.identity_violation < tol else EXIT_VIOLATION
    lines = [
        f"exact {split.exact.as_dict()}",
        f"gate removed {split.p_miss.as_dict()}",
        f"identity error {split.identity_violation:.3e} (tol {tol:g})",
    ]
    return {"subsystem": list(sub), "gate_index": gate, "tol": tol}, split.as_dict(), code, lines


def _is_bell_circuit(circuit: Circuit) -> bool:
    p = circuit.params()
    if not {"beta1", "beta2", "theta1"} <= set(p):
        return False
    return circuit == bell_circuit(p["beta1"].value, p["beta2"].value, p["theta1"].value)


def cmd_infoflow(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    params = [s.strip() for s in args.params.split(",") if s.strip()] if args.params else None
    try:
        rep = hypothesis_violation_search(circuit, sub, params)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    results = {
        "licensed": licensed_coefficients(circuit, sub).as_dict(),
        "search": rep.as_dict(),
        "gradient": {name: rep.gradient[:, k].tolist() for k, name in enumerate(rep.params)},
    }
    lines = [f"verdict {rep.verdict}", f"licensed drift {rep.licensed_drift:.3e}", f"marginal shift {rep.marginal_shift:.6f}"]
    if _is_bell_circuit(circuit):
        p = circuit.params()
        bell = bell_scenario(p["beta1"].value, p["beta2"].value, p["theta1"].value)
        results["closed_form"] = bell
        lines.append(f"closed form P(A=0) {bell['closed_form']['P(A=0)']:.12f}, simulation {bell['simulation']['P(A=0)']:.12f}")
        lines.append(f"printed form flagged inconsistent: {bell['printed_form']['note']}")
    code = EXIT_VIOLATION if rep.verdict == "violated" else EXIT_OK
    return {"subsystem": list(sub), "params": list(rep.params)}, results, code, lines


def cmd_paths(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    count = path_count(circuit)
    results = {"path_count": count, "marginal": dict(zip(marginal(final_state(circuit), sub).as_dict(), marginal_via_paths(circuit, sub).tolist()))}
    if count <= INTERFERENCE_PATH_LIMIT:
        results["interference"] = classify_interference(circuit, sub, max_pairs=0).as_dict()
    lines = [f"paths {count}", f"marginal via paths {results['marginal']}"]
    code = EXIT_OK
    if args.verify:
        tol = 1e-12 if args.tol is None else args.tol
        amp, marg = verify_against_state_vector(circuit), verify_marginal(circuit, sub)
        ok = amp < tol and marg < tol
        results["verify"] = {"max_amplitude_diff": amp, "max_marginal_diff": marg, "tol": tol, "passed": ok}
        lines.append(f"verify: amplitude diff {amp:.3e}, marginal diff {marg:.3e} ({'ok' if ok else 'FAILED'})")
        code = EXIT_OK if ok else EXIT_VIOLATION
    return {"subsystem": list(sub)}, results, code, lines


def cmd_nosignal(args, circuit: Circuit):
    sub = _sub(args.sub, circuit.n_particles)
    tol = 1e-12 if args.tol is None else args.tol
    sv = no_signaling_check(circuit, sub, args.trials, args.seed, args.insert_at, tol)
    results = {"state_vector": sv.as_dict()}
    ok = sv.passed
    lines = [f"state vector: max marginal shift {sv.max_deviation:.3e} over {sv.trials} trials at layer {sv.insert_at}"]
    if args.path_trials > 0:
        try:
            pr = remnant_invariance_check(circuit, sub, args.path_trials, args.seed, args.insert_at, tol)
        except PathLimitError as exc:
            results["paths"] = {"skipped": str(exc)}
        else:
            results["paths"] = pr.as_dict()
            ok = ok and pr.marginal_invariant
            lines.append(
                f"paths: max marginal shift {pr.max_marginal_deviation:.3e}, "
                f"endpoint amplitudes moved by up to {pr.max_amplitude_shift:.3f}"
            )
    lines.append("no-signaling holds" if ok else "marginal changed")
    inputs = {"subsystem": list(sub), "trials": args.trials, "path_trials": args.path_trials,
              "insert_at": args.insert_at, "tol": tol}
    return inputs, results, EXIT_OK if ok else EXIT_VIOLATION, lines


def cmd_bohm(args, _circuit=None):
    scn = load_scenario_ref(args.scenario)
    seed = args.seed if args.seed_given else None
    report = run_scenario(scn, seed=seed, out_dir=args.dump_dir)
    ok = report["marginal_equivariance"]["pass"] and report["full_equivariance"]["pass"]
    lines = [
        f"t_final {report['t_final']:g}, norm drift {report['norm']['max_drift']:.2e}",
        f"marginal equivariance TV {report['marginal_equivariance']['tv_distance']:.4f}",
        f"full equivariance TV {report['full_equivariance']['tv_distance']:.4f}",
    ]
    if "width_law" in report:
        lines.append(f"width law relative error {report['width_law']['relative_error']:.2e}")
    if "monitor" in report:
        m = report["monitor"]
        lines.append(f"effective wavefunction: {m['status']} (deviation {m['deviation']})")
    inputs = {"scenario": args.scenario, "seed": scn.seed if seed is None else seed}
    return inputs, report, EXIT_OK if ok else EXIT_VIOLATION, lines


COMMANDS = {
    "simulate": cmd_simulate,
    "marginals": cmd_marginals,
    "lhv": cmd_lhv,
    "miss-split": cmd_miss_split,
    "infoflow": cmd_infoflow,
    "paths": cmd_paths,
    "nosignal": cmd_nosignal,
    "bohm": cmd_bohm,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit the JSON report on stdout")
    common.add_argument("--out", help="also write the JSON report to this file")
    common.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    common.add_argument("--tol", type=float, default=None, help="checker tolerance")
    common.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")

    circ = argparse.ArgumentParser(add_help=False)
    circ.add_argument("circuit", help="circuit file or @fig1/@fig2/@fig3")
    circ.add_argument("--sub", default="0", help="subsystem particles, e.g. 0 or 0,2")

    parser = argparse.ArgumentParser(prog="qmarginals", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sp = parser.add_subparsers(dest="command", required=True, metavar="command")
    sp.add_parser("simulate", parents=[common, circ], help="final state and distributions")
    sp.add_parser("marginals", parents=[common, circ], help="subsystem marginal after every layer")
    sp.add_parser("lhv", parents=[common, circ], help="partial-collapse reconstruction")
    p = sp.add_parser("miss-split", parents=[common, circ], help="gate-removed marginal plus cross term")
    p.add_argument("--gate-index", type=int, default=None, help="controlled layer (default: last)")
    p = sp.add_parser("infoflow", parents=[common, circ], help="licensed-information violation search")
    p.add_argument("--params", help="comma-separated parameters to vary (default: all external)")
    p = sp.add_parser("paths", parents=[common, circ], help="discrete sum over paths")
    p.add_argument("--verify", action="store_true", help="compare with the state vector")
    p = sp.add_parser("nosignal", parents=[common, circ], help="random external unitaries after coupling")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--path-trials", type=int, default=100, help="trials for the path route (0 to skip)")
    p.add_argument("--insert-at", type=int, default=None, help="layer position for the random gates")
    p = sp.add_parser("bohm", parents=[common], help="run a continuum scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON or a bundled @name")
    p.add_argument("--dump-dir", help="write CSV and binary density dumps here")
    return parser


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    """Replace non-finite floats so the output stays strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def render(report: dict) -> str:
    return json.dumps(_clean(json.loads(json.dumps(report, default=_jsonable))), indent=2, sort_keys=True) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.seed_given = args.seed is not None
    if args.seed is None:
        args.seed = 0
    if args.seed < 0:
        parser.error("--seed must be non-negative")
    source = getattr(args, "circuit", None) or getattr(args, "scenario", None)
    try:
        circuit = None
        if args.command != "bohm":
            circuit, source = load_circuit(args.circuit)
        inputs, results, code, lines = COMMANDS[args.command](args, circuit)
    except (InputError, DslError, ScenarioError, CircuitError, PathLimitError, InstabilityError) as exc:
        print(f"qmarginals {args.command}: {source}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    report = {
        "schema": SCHEMA,
        "tool": {"name": "qmarginals", "version": __version__},
        "command": args.command,
        "source": source,
        "seed": args.seed,
        "inputs": inputs,
        "results": results,
        "exit_code": code,
    }
    if not args.no_timestamp:
        report["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    text = render(report)
    if args.out:
        try:
            Path(args.out).write_text(text)
        except OSError as exc:
            print(f"qmarginals: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_INPUT
    if args.json:
        sys.stdout.write(text)
    else:
        for line in lines:
            print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
