import numpy as np
import pytest
import scipy.linalg

from renewalkit import (GridError, InputError, ScalarKernelSet, TimeGrid,
                        compute_forcing, compute_kernels, compute_scalar_kernels,
                        decompose, equivalence_check, ode_reference,
                        solve_renewal, solve_renewal_scalar, validate_network)
from renewalkit.renewal import NegativeSolutionError

from conftest import chain, random_generator, random_partition, two_state


def _full(system, grid, n0):
    ks = compute_kernels(system, grid)
    S0, J0 = compute_forcing(system, grid, n0, kernels=ks)
    v = np.asarray([n0.get(s, 0.0) for s in system.network.states])
    N0 = {c.label: float(v[c.index].sum()) for c in system.compartments}
    return solve_renewal(ks.with_forcing(S0, J0), N0)


def test_zero_kernels_keep_contents(two_state_system):
    grid = TimeGrid(2.0, 0.01)
    ks = compute_kernels(two_state_system, grid)
    zero = type(ks)(grid, two_state_system, {k: np.zeros_like(v) for k, v in ks.G.items()},
                    {k: np.zeros_like(v) for k, v in ks.K.items()})
    sol = solve_renewal(zero, {"1": 0.3, "2": 0.7})
    assert not sol.S["1"].any() and not sol.J["2"].any()
    assert np.all(sol.N["1"] == 0.3) and np.all(sol.N["2"] == 0.7)


def test_two_state_relaxation(two_state_system):
    grid = TimeGrid(10.0, 1e-3)
    sol = _full(two_state_system, grid, {"1": 1.0})
    exact = 0.5 + 0.5 * np.exp(-2 * grid.nodes)
    assert np.abs(sol.N["1"] - exact).max() <= 1e-6
    assert sol.mass_drift() <= 1e-12


def test_chain_erlang_cdf(chain_system):
    grid = TimeGrid(10.0, 1e-3)
    sol = _full(chain_system, grid, {"1": 1.0})
    t = grid.nodes
    assert np.abs(sol.N["3"] - (1 - np.exp(-t) - t * np.exp(-t))).max() <= 1e-6


def test_markovian_scalar_kernels_reproduce_expm():
    # three compartments with rates lam[a, b]; Phi = lam exp(-Lambda t)
    lam = np.array([[0, 1.0, 0.5], [0.3, 0, 0.2], [0.4, 0.6, 0]])
    labels = ("a", "b", "c")
    grid = TimeGrid(10.0, 1e-3)
    t = grid.nodes
    Lam = lam.sum(axis=1)
    Phi = {(labels[i], labels[j]): lam[i, j] * np.exp(-Lam[i] * t)
           for i in range(3) for j in range(3) if i != j}
    N0 = np.array([0.2, 0.5, 0.3])
    B0 = {labels[j]: sum(N0[i] * lam[i, j] * np.exp(-Lam[i] * t) for i in range(3) if i != j) for j in range(3)}
    D0 = {labels[i]: N0[i] * Lam[i] * np.exp(-Lam[i] * t) for i in range(3)}
    sc = ScalarKernelSet.from_kernels(grid, Phi, B0, D0, dict(zip(labels, N0)), labels=labels)
    sol = solve_renewal_scalar(sc)
    A = lam.T - np.diag(Lam)
    for k in (1000, 5000, 10000):
        ref = scipy.linalg.expm(A * t[k]) @ N0
        for i, a in enumerate(labels):
            assert sol.N[a][k] == pytest.approx(ref[i], abs=1e-6)


def test_sink_compartment_monotone():
    net = validate_network(["1", "2"], [("1", "2", 1.0)])
    sc = compute_scalar_kernels(decompose(net, [["1"], ["2"]]), TimeGrid(10.0, 1e-2), {"1": 1.0})
    sol = solve_renewal_scalar(sc)
    assert not sol.D["2"].any()
    assert np.all(np.diff(sol.N["2"]) >= 0)


def test_erlang_cycle_conserves_mass():
    grid = TimeGrid(20.0, 1e-2)
    t = grid.nodes
    erl = t * np.exp(-t)
    Phi = {("a", "b"): erl, ("b", "c"): erl, ("c", "a"): erl}
    D0 = {"a": erl}
    B0 = {"b": erl}
    sc = ScalarKernelSet.from_kernels(grid, Phi, B0, D0, {"a": 1.0}, labels=("a", "b", "c"))
    sol = solve_renewal_scalar(sc)
    assert sol.mass_drift() <= 1e-8


def test_stationary_start_is_constant():
    net = validate_network(["1", "2", "3"], [("1", "2", 2.0), ("2", "1", 1.0), ("2", "3", 1.0), ("3", "2", 3.0)])
    mu = scipy.linalg.null_space(net.A)[:, 0]
    mu /= mu.sum()
    sys_ = decompose(net, [["1"], ["2", "3"]])
    sol = _full(sys_, TimeGrid(5.0, 1e-3), dict(zip(net.states, mu)))
    assert np.abs(sol.N["1"] - mu[0]).max() <= 1e-6


def test_ode_reference_two_state():
    grid = TimeGrid(3.0, 0.01)
    ref = ode_reference(two_state(), {"1": 1.0}, grid)
    assert np.abs(ref.n[:, 0] - (0.5 + 0.5 * np.exp(-2 * grid.nodes))).max() <= 1e-14


@pytest.mark.parametrize("net, part, n0", [
    (two_state(), [["1"], ["2"]], {"1": 1.0}),
    (chain(), [["1", "2"], ["3"]], {"1": 1.0}),
])
def test_equivalence_examples(net, part, n0):
    rep = equivalence_check(net, part, n0, TimeGrid(10.0, 1e-3), tol=1e-6)
    assert rep.max_deviation_N <= 1e-6


def test_random_ten_state_positive_and_conservative():
    rng = np.random.default_rng(21)
    states = [f"s{i}" for i in range(10)]
    A = random_generator(rng, 10, density=0.4)
    net = validate_network(states, [(states[j], states[i], A[i, j])
                                    for i in range(10) for j in range(10) if i != j and A[i, j] > 0])
    rep = equivalence_check(net, random_partition(rng, states), rng.dirichlet(np.ones(10)),
                            TimeGrid(10.0, 1e-3))
    sol = rep.solution
    assert sol.mass_drift() <= 1e-10
    for a in sol.labels:
        assert sol.S[a].min() >= -1e-10 and sol.J[a].min() >= -1e-10


def test_under_resolved_grid_refused():
    net = validate_network(["1", "2"], [("1", "2", 500.0), ("2", "1", 1.0)])
    with pytest.raises(GridError, match="under-resolved"):
        equivalence_check(net, [["1"], ["2"]], {"1": 1.0}, TimeGrid(1.0, 1e-3))


def test_bad_initial_content(two_state_system):
    grid = TimeGrid(1.0, 0.1)
    sc = compute_scalar_kernels(two_state_system, grid)
    with pytest.raises(InputError):
        solve_renewal_scalar(sc, {"1": -1.0})
    with pytest.raises(InputError):
        solve_renewal_scalar(sc, {"9": 1.0})


def test_negative_solution_detected():
    # dt * Phi(0) / 2 > 1 makes the implicit step matrix indefinite
    grid = TimeGrid(2.0, 0.1)
    t = grid.nodes
    fast = 30 * np.exp(-30 * t)
    sc = ScalarKernelSet.from_kernels(grid, {("a", "b"): fast, ("b", "a"): fast},
                                      {"b": fast}, {"a": fast}, {"a": 1.0})
    with pytest.raises(NegativeSolutionError):
        solve_renewal_scalar(sc)
    sol = solve_renewal_scalar(sc, check=False)
    assert min(sol.B["a"].min(), sol.B["b"].min()) < 0
