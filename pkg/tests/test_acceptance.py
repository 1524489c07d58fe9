"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""
import time

import numpy as np
import pytest
import scipy.linalg

from renewalkit import (HistoryMeasure, ScalarKernelSet, TargetMeasure, TimeGrid,
                        compute_forcing, compute_kernels, compute_scalar_kernels, decompose,
                        detect_detailed_balance, equivalence_check, network_from_matrix,
                        solve_renewal, spe_rfe_equivalence, validate_network)
from renewalkit.analysis import (complete_monotonicity_check, detailed_balance_kernel,
                                 long_time_limits, markovianity_test)
from renewalkit.kernels import initial_vector
from renewalkit.phasetype import build_network, fit_erlang_mixture, verify_approximation
from renewalkit.zoo import adaptation, ffl, hopfield, polymer
from renewalkit.zoo.presets import random_hopfield_pairs

from conftest import random_generator, random_partition


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return emit


def test_c01_ode_renewal_equivalence(report):
    start = time.perf_counter()
    grid = TimeGrid(20.0, 1e-3)
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        net = network_from_matrix(random_generator(rng, 8, 0.5))
        part = random_partition(rng, list(net.states), blocks=3)
        n0 = dict(zip(net.states, rng.dirichlet(np.ones(8))))
        rep = equivalence_check(net, part, n0, grid)
        worst = max(worst, max(rep.deviation_N.values()))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-5 and elapsed < 30.0,
           f"max |N_renewal - N_ode| = {worst:.2e} (<= 1e-5), runtime {elapsed:.1f} s (< 30 s)")


def test_c02_markovianity(report):
    net = validate_network(["1", "2", "3", "4"], [
        ("1", "2", 1.0), ("2", "1", 0.5), ("2", "3", 2.0), ("3", "4", 0.7),
        ("4", "1", 0.25), ("3", "1", 1.5)])
    sc = compute_scalar_kernels(decompose(net, [["1"], ["2"], ["3"], ["4"]]), TimeGrid(20.0, 1e-3))
    acc = markovianity_test(sc)
    err = float(np.abs(acc.generator - net.A).max()) if acc.markovian else np.inf
    grid = TimeGrid(20.0, 1e-3)
    t = grid.nodes
    rej = markovianity_test(ScalarKernelSet.from_kernels(grid, {("a", "b"): t * np.exp(-t), ("b", "a"): np.exp(-t)}))
    report(2, acc.markovian and err <= 1e-6 and not rej.markovian,
           f"singletons accepted, generator error {err:.2e} (<= 1e-6); t e^-t rejected: {not rej.markovian}")


def _db_network(rng, n_src=3, n_tgt=3):
    """Detailed-balance network built as A_ij = S_ij mu_i with S symmetric; the two
    blocks touch only through their first states, so both have unique entrances."""
    n = n_src + n_tgt
    mu = rng.uniform(0.2, 1.0, n)
    S = np.zeros((n, n))
    for lo, hi in ((0, n_src), (n_src, n)):
        S[lo:hi, lo:hi] = rng.uniform(0.2, 2.0, (hi - lo, hi - lo))
    S[0, n_src] = rng.uniform(0.2, 2.0)
    S = np.triu(S, 1)
    S = S + S.T
    A = S * mu[:, None]
    A[np.diag_indices(n)] = -A.sum(axis=0)
    net = network_from_matrix(A)
    states = list(net.states)
    return net, decompose(net, [states[:n_src], states[n_src:]], labels=["src", "tgt"]), A


def test_c03_detailed_balance(report):
    worst_w, worst_norm, worst_rec = np.inf, 0.0, 0.0
    t = np.linspace(0.0, 15.0, 301)
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        net, system, A = _db_network(rng)
        cert = detect_detailed_balance(net)
        assert cert.holds
        sk = detailed_balance_kernel(system, cert, "src", "tgt")
        worst_w = min(worst_w, float(sk.weights.min()))
        worst_norm = max(worst_norm, abs(float(sk.weights.sum()) - 1.0))
        blk = A[:3, :3]
        ref = A[3, 0] * np.array([scipy.linalg.expm(blk * x)[0, 0] for x in t])
        worst_rec = max(worst_rec, float(np.abs(sk(t) - ref).max()))
    cyc = validate_network(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 1.0), ("3", "1", 1.0)])
    no_cert = not detect_detailed_balance(cyc).holds
    grid = TimeGrid(20.0, 1e-2)
    sc = compute_scalar_kernels(decompose(cyc, [["1", "2"], ["3"]]), grid)
    fit = complete_monotonicity_check(sc.Phi["1+2", "3"], grid.dt)
    ok = worst_w >= -1e-12 and worst_norm <= 1e-8 and worst_rec <= 1e-8 and no_cert \
        and fit.mixture_residual > 1e-8
    report(3, ok, f"min weight {worst_w:.2e}, |sum kappa^2 - 1| {worst_norm:.1e}, reconstruction "
                  f"{worst_rec:.1e}; 3-cycle: no certificate {no_cert}, mixture residual {fit.mixture_residual:.2e}")


def test_c04_phase_type(report):
    target = TargetMeasure.uniform_on(1.0, 2.0)
    fit = fit_erlang_mixture(target, eps=0.05)
    dists = [d for _, d in fit.history]
    shrinking = all(b < a for a, b in zip(dists, dists[1:]))
    model = fit.model.with_pairs((("a", "b", 1.0),))
    net, part = build_network([model], compartments=["b"])
    rep = verify_approximation({("a", "b"): target}, net, part, TimeGrid(20.0, 1e-3))
    mass_err = abs(rep.quadrature_mass["a", "b"] - 1.0)
    d_net = rep.distance["a", "b"]
    ok = fit.distance <= 0.05 and mass_err <= 1e-6 and d_net <= 0.05 and shrinking and len(dists) > 1
    report(4, ok, f"fit d_w {fit.distance:.4f} at M={fit.model.M}, network d_w {d_net:.4f}, mass error "
                  f"{mass_err:.1e}; d_w over doubling M: {', '.join(f'{d:.3f}' for d in dists)}")


def test_c05_long_time(report):
    grid = TimeGrid(40.0, 1e-3)
    e = np.exp(-grid.nodes)
    sc = ScalarKernelSet.from_kernels(grid, {("1", "2"): e, ("2", "1"): e},
                                      B0={"1": e}, D0={"2": e}, N0={"2": 1.0})
    res = long_time_limits(sc)
    B_end = np.array([res.solution.B[a][-1] for a in res.labels])
    N_err = max(abs(res.solution.N[a][-1] - res.N_inf[a]) for a in res.labels)
    c0_gap = abs(res.c0 - res.c0_tail)
    ok = np.abs(B_end - 0.5).max() <= 1e-4 and res.decay_rate > 0 and N_err <= 1e-4 and c0_gap <= 1e-4
    report(5, ok, f"B(40) = ({B_end[0]:.6f}, {B_end[1]:.6f}), decay rate {res.decay_rate:.3g}, "
                  f"|N(40) - N_inf| {N_err:.1e}, |c0 - c0_tail| {c0_gap:.1e}")


def _spe_deviation(kind, dt):
    grid = TimeGrid(12.0, dt)
    t = grid.nodes
    psi = np.exp(-t) if kind == "exp" else 4 * t * np.exp(-2 * t)
    sc = ScalarKernelSet.from_kernels(grid, {("a", "b"): psi, ("b", "a"): psi})
    hist = HistoryMeasure(atoms={"a": [(0.0, 1.0), (-0.5, 0.5)], "b": [(-1.0, 0.3)]})
    return spe_rfe_equivalence(sc, hist, 8.0).max_deviation


def test_c06_spe_equivalence(report):
    parts, ok = [], True
    for kind in ("exp", "erlang2"):
        fine, coarse = _spe_deviation(kind, 1e-3), _spe_deviation(kind, 2e-3)
        ratio = coarse / fine
        ok = ok and fine <= 5e-3 and 1.5 <= ratio <= 2.5
        parts.append(f"{kind}: {fine:.2e} (<= 5 dt), halving ratio {ratio:.3f}")
    report(6, ok, "; ".join(parts))


def test_c07_hopfield(report):
    start = time.perf_counter()
    eps, s = 0.01, 0.5
    p, pb = hopfield.reference_params(eps, s)
    d = hopfield.hopfield_discrimination(p, pb, quadrature=False)
    theta2 = d.theta ** 2
    r = hopfield.hopfield_response(p)
    target_P = eps ** s / p.xi ** 2
    worst = min(hopfield.hopfield_discrimination(a, b, quadrature=False).ratio / np.exp(-2 * (b.E1 - a.E1))
                for a, b in random_hopfield_pairs(np.random.default_rng(42)))
    elapsed = time.perf_counter() - start
    rel_ratio = abs(d.ratio - theta2) / theta2
    rel_P = abs(d.P - target_P) / target_P
    quad = abs(r.P_quadrature - r.P_laplace)
    ok = rel_ratio <= 0.15 and d.ratio >= theta2 and worst >= 1.0 and rel_P <= 0.15 \
        and quad <= 1e-6 and elapsed < 10.0
    report(7, ok, f"ratio {d.ratio:.5f} vs theta^2 {theta2:.5f} ({rel_ratio:.1%}), min ratio/theta^2 over 100 "
                  f"draws {worst:.3f}; P {d.P:.5f} vs {target_P:.5f} ({rel_P:.1%}); quadrature - Laplace "
                  f"{quad:.1e}; {elapsed:.1f} s")


def test_c08_polymer_front(report):
    grid = TimeGrid(200.0, 0.05)
    t = grid.nodes
    kernels = {"exponential": np.exp(-t), "erlang2": 4 * t * np.exp(-2 * t),
               "erlang5": polymer.erlang_kernel(5, 1.0, t)}
    parts, ok = [], True
    for name, psi in kernels.items():
        out = polymer.polymer_front(psi, grid, 260)
        e_speed = abs(out.speed * out.mu - 1.0)
        e_plat = abs(out.plateau / out.mu - 1.0)
        ok = ok and e_speed <= 0.05 and e_plat <= 0.05 and not out.boundary_hit
        parts.append(f"{name} speed {out.speed:.4f} plateau {out.plateau:.4f}")
    report(8, ok, "; ".join(parts) + " (targets 1, within 5%)")


def test_c09_adaptation(report):
    prm = adaptation.AdaptationParams(2.0, 3.0)
    grid = TimeGrid(40.0, 1e-3)
    integral = abs(float(adaptation.adaptation_kernel_integral(prm, 40.0)))
    out = adaptation.adaptation_response(prm, grid, 2 * prm.b)
    late = float(np.abs(out.X[grid.nodes >= 20.0] - 1.0).max())
    report(9, integral <= 1e-6 and late <= 1e-4,
           f"|int_0^40 Phi| = {integral:.1e} (<= 1e-6), max_(t>=20) |X - 1| = {late:.1e} (<= 1e-4)")


def test_c10_ffl(report):
    dt = 0.01
    out = ffl.ffl_response(ffl.FFLParams(5.0, 1.0, 5.0), TimeGrid(5.0, dt), lambda t: 1.0 + np.sin(t))
    tau, xi, _ = ffl.ffl_step_off(ffl.FFLParams(200.0, 1.0, 200.0), 2.0, 4.0)
    after = float(np.abs(xi[tau >= 2.05]).max())
    report(10, out.deviation <= 5 * dt and after <= 1e-3,
           f"sup |Z_kernel - Z_ode| = {out.deviation:.2e} (<= {5 * dt:g}); step-off response after "
           f"removal {after:.1e} (<= 1e-3)")


def test_c11_conservation_positivity(report):
    grid = TimeGrid(5.0, 5e-3)
    drift, low = 0.0, np.inf
    for seed in range(100):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(3, 9))
        net = network_from_matrix(random_generator(rng, n, 0.6, 0.0, 2.0))
        system = decompose(net, random_partition(rng, list(net.states), blocks=min(3, n)))
        n0 = dict(zip(net.states, rng.dirichlet(np.ones(n))))
        kernels = compute_kernels(system, grid)
        S0, J0 = compute_forcing(system, grid, n0, kernels=kernels)
        v = initial_vector(net, n0)
        N0 = {c.label: float(v[c.index].sum()) for c in system.compartments}
        sol = solve_renewal(kernels.with_forcing(S0, J0), N0, check=False)
        drift = max(drift, sol.mass_drift())
        low = min(low, min(float(sol.N[a].min()) for a in sol.labels))
    report(11, drift <= 1e-8 and low >= -1e-10,
           f"100 systems: relative mass drift {drift:.1e} (<= 1e-8), min N {low:.1e} (>= -1e-10)")
