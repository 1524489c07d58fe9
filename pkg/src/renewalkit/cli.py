"""Command-line interface.

Subcommands: ``reduce``, ``solve``, ``spe``, ``analyze``, ``approx`` and
``demo``.  Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
import argparse
import os
import sys

import numpy as np

from . import io as rio
from .analysis import (complete_monotonicity_check, long_time_limits,
                       markovianity_test)
from .errors import InputError, NumericalError
from .kernels import (TimeGrid, compute_forcing, compute_kernels,
                      compute_scalar_kernels, initial_vector,
                      kernel_mass_report, suggest_t_max)
from .network import check_one_entrance, decompose, detect_detailed_balance
from .phasetype import (TargetMeasure, build_network, fit_compartment,
                        fit_erlang_mixture, verify_approximation)
from .renewal import solve_renewal, solve_renewal_scalar
from .spe import (HistoryMeasure, rates_from_kernels, solve_spe,
                  spe_rfe_equivalence)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _grid(text):
    try:
        t_max, dt = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected t_max,dt") from None
    if not dt > 0 or t_max < 10 * dt:
        raise argparse.ArgumentTypeError("need dt > 0 and t_max >= 10 dt")
    try:
        return TimeGrid(t_max, dt)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fmt(x):
    return rio.FLOAT_FMT % x


def _out(args, name):
    return os.path.join(args.out, name)


def _load_network(path, need_partition=True):
    net, partition, labels, n0 = rio.read_network_file(path)
    if partition is None:
        if need_partition:
            partition = [[s] for s in net.states]
    system = decompose(net, partition, labels) if partition is not None else None
    return net, system, n0


def _scalar_from_input(args):
    """Scalar kernels from a network file (needs --grid) or a kernel table."""
    path = args.input
    if path.endswith(".json"):
        if args.grid is None:
            raise InputError("--grid t_max,dt is required for network input")
        net, system, n0 = _load_network(path)
        return compute_scalar_kernels(system, args.grid, n0), net, system
    cols, data = rio.read_table(path)
    N0 = None
    side = os.path.join(os.path.dirname(os.path.abspath(path)), "mass_report.json")
    if os.path.exists(side):
        N0 = rio.read_json(side).get("N0")
    return rio.scalar_kernels_from_table(cols, data, N0), None, None


def cmd_reduce(args):
    net, system, n0 = _load_network(args.input)
    if args.suggest_tmax:
        overall, per = suggest_t_max(system)
        print("suggested t_max:", "none (a compartment does not decay)" if overall is None else _fmt(overall))
        for a, v in per.items():
            print(f"  {a}: {'no decay' if v is None else _fmt(v)}")
        if args.grid is None:
            return EXIT_OK
    if args.grid is None:
        raise InputError("--grid t_max,dt is required")
    grid = args.grid
    if args.scalar:
        check_one_entrance(system)
        scalar = compute_scalar_kernels(system, grid, n0)
        cols, data = rio.scalar_kernel_table(scalar)
        rio.write_table(_out(args, "scalar_kernels.csv"), cols, data)
        report = kernel_mass_report(scalar, tol=args.tol)
        doc = {
            "grid": {"t_max": grid.t_max, "dt": grid.dt},
            "labels": list(scalar.labels),
            "entrances": scalar.entrances,
            "N0": scalar.N0,
            "masses": {f"{a}->{b}": m for (a, b), m in scalar.masses.items()},
            "compartments": {a: {"total": e.total, "status": e.status, "deficit": e.deficit}
                             for a, e in report.items()},
        }
        rio.write_json(_out(args, "mass_report.json"), doc)
        for a, e in report.items():
            print(f"{a}: exit mass {_fmt(e.total)} ({e.status})")
        return EXIT_OK
    kernels = compute_kernels(system, grid)
    S0, J0 = compute_forcing(system, grid, n0, kernels=kernels)
    kernels = kernels.with_forcing(S0, J0)
    cols, data = rio.kernel_table(kernels)
    rio.write_table(_out(args, "kernels.csv"), cols, data)
    cols, data = rio.forcing_table(kernels)
    rio.write_table(_out(args, "forcing.csv"), cols, data)
    v = initial_vector(net, n0)
    doc = {
        "grid": {"t_max": grid.t_max, "dt": grid.dt},
        "labels": list(system.labels),
        "states": {c.label: list(c.states) for c in system.compartments},
        "N0": {c.label: float(v[c.index].sum()) for c in system.compartments},
        "conservation_defect": kernels.conservation_defect(),
    }
    rio.write_json(_out(args, "mass_report.json"), doc)
    print(f"kernels for {len(system.labels)} compartments written; "
          f"conservation defect {_fmt(doc['conservation_defect'])}")
    return EXIT_OK


def cmd_solve(args):
    if args.input.endswith(".json") and not args.scalar:
        if args.grid is None:
            raise InputError("--grid t_max,dt is required for network input")
        net, system, n0 = _load_network(args.input)
        kernels = compute_kernels(system, args.grid)
        S0, J0 = compute_forcing(system, args.grid, n0, kernels=kernels)
        v = initial_vector(net, n0)
        N0 = {c.label: float(v[c.index].sum()) for c in system.compartments}
        sol = solve_renewal(kernels.with_forcing(S0, J0), N0)
    else:
        if args.input.endswith(".json"):
            _, system, _ = _load_network(args.input)
            check_one_entrance(system)
        scalar, _, _ = _scalar_from_input(args)
        sol = solve_renewal_scalar(scalar)
    cols, data = rio.solution_table(sol)
    rio.write_table(_out(args, "solution.csv"), cols, data)
    print(f"relative mass drift {_fmt(sol.mass_drift())}")
    for a in sol.labels:
        print(f"N[{a}](t_max) = {_fmt(sol.N[a][-1])}")
    return EXIT_OK


def _history(args, scalar):
    if args.history:
        doc = rio.read_json(args.history)
        atoms = {str(a): [tuple(x) for x in v] for a, v in doc.get("atoms", {}).items()}
        dens = {str(a): np.asarray(v, dtype=float) for a, v in doc.get("densities", {}).items()}
        unknown = (set(atoms) | set(dens)) - set(scalar.labels)
        if unknown:
            raise InputError(f"history names unknown compartments {sorted(unknown)}")
        return HistoryMeasure(atoms, dens)
    # fresh entries at time 0 carrying the initial contents
    return HistoryMeasure({a: [(0.0, v)] for a, v in scalar.N0.items() if v > 0})


def cmd_spe(args):
    scalar, _, _ = _scalar_from_input(args)
    hist = _history(args, scalar)
    span = hist.span(scalar.grid.dt)
    t_max = args.t_max if args.t_max is not None else scalar.grid.t_max - span
    if t_max <= 0:
        raise InputError("history is longer than the kernel horizon")
    steps = int(round(t_max / scalar.grid.dt))
    t_max = steps * scalar.grid.dt
    report = spe_rfe_equivalence(scalar, hist, t_max, tol=args.tol if args.tol_given else None)
    dens = report.spe
    rio.write_age_densities(args.out, dens)
    cols, data = ["t"], [dens.grid.nodes]
    for name, src in (("N", dens.N), ("B", dens.B), ("D", dens.D)):
        for a in scalar.labels:
            cols.append(f"{name}[{a}]")
            data.append(src[a])
    rio.write_table(_out(args, "spe_solution.csv"), cols, np.column_stack(data))
    print(f"sup |N_spe - N_renewal| = {_fmt(report.max_deviation)} (tolerance {_fmt(report.tol)})")
    return EXIT_OK


def cmd_analyze(args):
    scalar, net, system = _scalar_from_input(args)
    want = {k for k in ("markov", "detailed_balance", "asymptotics") if getattr(args, k)}
    if not want:
        want = {"markov", "detailed_balance", "asymptotics"}
    doc = {}
    if "markov" in want:
        v = markovianity_test(scalar, tol=args.tol)
        sec = {"markovian": v.markovian, "rates": v.rates, "deviation": v.deviation}
        if v.generator is not None:
            sec["labels"] = list(v.labels)
            sec["generator"] = v.generator
        doc["markovianity"] = sec
        print(f"Markovian: {'yes' if v.markovian else 'no'}")
        if v.generator is not None:
            print("recovered generator (columns sum to zero), order " + ", ".join(v.labels))
            for row in v.generator:
                print("  " + "  ".join(_fmt(x) for x in row))
    if "detailed_balance" in want:
        sec = {}
        if net is not None:
            try:
                cert = detect_detailed_balance(net)
                sec["certificate"] = cert.holds
                sec["relative_residual"] = cert.relative_residual
                if cert.holds:
                    sec["stationary"] = dict(zip(net.states, cert.mu))
            except InputError as exc:
                sec["certificate"] = None
                sec["note"] = str(exc)
            print(f"detailed balance certificate: {sec['certificate']}")
        kern = {}
        for (a, b), phi in scalar.Phi.items():
            if scalar.masses[a, b] <= 0:
                continue
            cm = complete_monotonicity_check(phi, scalar.grid.dt)
            kern[f"{a}->{b}"] = {"verdict": cm.wording, "mixture_residual": cm.mixture_residual}
            print(f"Phi[{a}->{b}]: {cm.wording}")
        sec["kernels"] = kern
        doc["detailed_balance"] = sec
    if "asymptotics" in want:
        try:
            res = long_time_limits(scalar)
            doc["asymptotics"] = {
                "labels": list(res.labels), "v0": res.v0, "u0": res.u0, "c0": res.c0,
                "c0_tail": res.c0_tail, "decay_rate": res.decay_rate, "N_inf": res.N_inf,
                "mean_exit_time": res.mean_exit_time, "perron_residual": res.perron_residual,
            }
            print(f"c0 = {_fmt(res.c0)}, tail estimate {_fmt(res.c0_tail)}, decay rate {_fmt(res.decay_rate)}")
        except (InputError, NumericalError) as exc:
            if want == {"asymptotics"}:
                raise
            doc["asymptotics"] = {"note": str(exc)}
            print(f"asymptotics: not available ({exc})")
    rio.write_json(_out(args, "analysis.json"), doc)
    return EXIT_OK


def _parse_target(text):
    kind, *vals = text.split(":")
    try:
        nums = [float(v) for v in vals]
        if kind == "uniform" and len(nums) == 2:
            return TargetMeasure.uniform_on(*nums)
        if kind == "point" and len(nums) == 1:
            return TargetMeasure.point(nums[0])
        if kind == "erlang" and len(nums) in (2, 3):
            rate, m = nums[0], int(nums[1])
            mass = nums[2] if len(nums) == 3 else 1.0
            return TargetMeasure.from_erlang(rate, [(1.0, m)], mass)
    except (ValueError, InputError) as exc:
        raise InputError(f"bad target {text!r}: {exc}") from None
    raise InputError(f"bad target {text!r}; use uniform:a:b, point:x or erlang:rate:m[:mass]")


def cmd_approx(args):
    if args.target:
        target = _parse_target(args.target)
        fit = fit_erlang_mixture(target, args.eps, M_cap=args.max_m)
        model = fit.model.with_pairs([("a", "b", target.mass)])
        models, targets = [model], {("a", "b"): target}
        for M, d in fit.history:
            print(f"M = {M}: distance {_fmt(d)}")
        end = target.support_end()
        grid = args.grid or _verification_grid(end, model.rate)
    elif args.input:
        scalar, _, _ = _scalar_from_input(args)
        targets, models = {}, []
        for a in scalar.labels:
            outs = {b: TargetMeasure.from_samples(scalar.Phi[a, b], scalar.grid.dt)
                    for b in scalar.labels if b != a and scalar.masses[a, b] > 0}
            for b, t in outs.items():
                targets[a, b] = t
            models.extend(fit_compartment(a, outs, args.eps, M_cap=args.max_m))
        grid = args.grid or scalar.grid
    else:
        raise InputError("give --target or a kernel table / network input")
    labels = sorted({x for key in targets for x in key}, key=str)
    net, part = build_network(models, compartments=labels, layout=args.layout)
    rio.write_network_file(_out(args, "network.json"), net, part)
    rio.write_models(_out(args, "models.json"), models)
    rep = verify_approximation(targets, net, part, grid)
    doc = {"distance": "bounded-Lipschitz", "states": net.size, "pairs": {}}
    for key in targets:
        name = f"{key[0]}->{key[1]}"
        doc["pairs"][name] = {"target_mass": rep.target_mass[key], "exact_mass": rep.exact_mass[key],
                              "quadrature_mass": rep.quadrature_mass[key], "distance": rep.distance[key]}
        print(f"{name}: distance {_fmt(rep.distance[key])}, mass {_fmt(rep.exact_mass[key])} "
              f"(target {_fmt(rep.target_mass[key])})")
    doc["total_distance"] = rep.total_distance
    rio.write_json(_out(args, "approx_report.json"), doc)
    print(f"network with {net.size} states written; total distance {_fmt(rep.total_distance)}")
    return EXIT_OK


def _verification_grid(end, rate):
    t_max = float(np.ceil(2.0 * end + 40.0 / rate))
    n = int(min(20000, max(2000, np.ceil(t_max * rate * 20))))
    return TimeGrid(t_max, t_max / n)


def cmd_demo(args):
    from .zoo import run_preset
    res = run_preset(args.preset, seed=args.seed)
    for name, (cols, data) in res.tables.items():
        rio.write_table(_out(args, f"{name}.csv"), cols, data)
    text = res.summary()
    rio.atomic_write(_out(args, "summary.txt"), text + "\n")
    print(text)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=_grid, help="time grid as t_max,dt")
    common.add_argument("--tol", type=float, default=None, help="tolerance for checks")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=42, help="seed for randomized sweeps")
    common.add_argument("--scalar", action="store_true", help="use the scalar one-entrance reduction")

    p = argparse.ArgumentParser(prog="renewalkit", description="Renewal-equation reduction of reaction networks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reduce", parents=[common], help="compute response kernels")
    r.add_argument("input", help="network file")
    r.add_argument("--suggest-tmax", action="store_true", help="print a horizon from the slowest block mode")
    r.set_defaults(func=cmd_reduce, default_tol=1e-6)

    s = sub.add_parser("solve", parents=[common], help="solve the renewal equations")
    s.add_argument("input", help="network file or scalar kernel table")
    s.set_defaults(func=cmd_solve, default_tol=1e-6)

    e = sub.add_parser("spe", parents=[common], help="solve the age-structured equations")
    e.add_argument("input", help="network file or scalar kernel table")
    e.add_argument("--history", help="history file with 'atoms' and/or 'densities'")
    e.add_argument("--t-max", type=float, default=None, help="horizon (default: kernel horizon minus history span)")
    e.set_defaults(func=cmd_spe, default_tol=None)

    a = sub.add_parser("analyze", parents=[common], help="kernel analysis")
    a.add_argument("input", help="network file or scalar kernel table")
    a.add_argument("--markov", action="store_true", help="Markovianity test")
    a.add_argument("--detailed-balance", action="store_true", help="detailed balance and monotonicity checks")
    a.add_argument("--asymptotics", action="store_true", help="long-time limits")
    a.set_defaults(func=cmd_analyze, default_tol=1e-6)

    x = sub.add_parser("approx", parents=[common], help="phase-type approximation")
    x.add_argument("input", nargs="?", help="network file or scalar kernel table")
    x.add_argument("--target", help="uniform:a:b, point:x or erlang:rate:m[:mass]")
    x.add_argument("--eps", type=float, default=0.05, help="distance target")
    x.add_argument("--layout", choices=["auto", "branched", "shared"], default="auto")
    x.add_argument("--max-m", type=int, default=4096, help="largest number of cells")
    x.set_defaults(func=cmd_approx, default_tol=1e-6)

    d = sub.add_parser("demo", parents=[common], help="run a worked example")
    d.add_argument("preset", help="hopfield-fig4, polymer-front, adaptation, ffl-fig6 or nonlinear-polymer")
    d.set_defaults(func=cmd_demo, default_tol=None)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    args.tol_given = args.tol is not None
    if args.tol is None:
        args.tol = args.default_tol
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
