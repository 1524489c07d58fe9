import numpy as np
import pytest
import scipy.linalg

from renewalkit import (InputError, NumericalError, ScalarKernelSet, TimeGrid,
                        compute_scalar_kernels, decompose, detect_detailed_balance,
                        validate_network)
from renewalkit.analysis import (build_M, complete_monotonicity_check,
                                 detailed_balance_kernel, laplace_kernel,
                                 long_time_limits, markovianity_test, perron,
                                 perron_details)

from conftest import two_state


def _sym_exp(grid, B0=None, D0=None, N0=None):
    e = np.exp(-grid.nodes)
    return ScalarKernelSet.from_kernels(grid, {("1", "2"): e, ("2", "1"): e}, B0, D0, N0)


def test_laplace_values():
    grid = TimeGrid(40.0, 1e-3)
    e = np.exp(-grid.nodes)
    assert laplace_kernel(e, grid.dt, 0.0) == pytest.approx(1.0, abs=1e-6)
    assert laplace_kernel(e, grid.dt, 1.0) == pytest.approx(0.5, abs=1e-6)
    assert laplace_kernel(0 * e, grid.dt, 2.0) == 0.0


def test_mass_matrix():
    grid = TimeGrid(40.0, 1e-3)
    sc = _sym_exp(grid)
    assert np.abs(build_M(sc, 0.0) - [[0, 1], [1, 0]]).max() <= 1e-6
    assert np.abs(build_M(sc, 1.0) - [[0, 0.5], [0.5, 0]]).max() <= 1e-6
    one = ScalarKernelSet.from_kernels(grid, {}, labels=("x",))
    assert np.array_equal(build_M(one), [[0.0]])


def test_markov_accepts_exponentials():
    grid = TimeGrid(10.0, 1e-3)
    t = grid.nodes
    sc = ScalarKernelSet.from_kernels(
        grid, {("a", "b"): 2 * np.exp(-3 * t), ("a", "c"): np.exp(-3 * t)}, labels=("a", "b", "c"))
    v = markovianity_test(sc)
    assert v.markovian
    assert v.rates["a", "b"] == pytest.approx(2.0, abs=1e-12)
    assert v.rates["a", "c"] == pytest.approx(1.0, abs=1e-12)
    assert v.decay["a"] == pytest.approx(3.0, rel=1e-9)
    assert v.evidence["b"].startswith("no exits")


def test_markov_rejects_erlang_and_mixture():
    grid = TimeGrid(10.0, 1e-3)
    t = grid.nodes
    erl = markovianity_test(ScalarKernelSet.from_kernels(grid, {("a", "b"): t * np.exp(-t)}))
    assert not erl.markovian and erl.generator is None
    assert "k(0) = 0" in erl.evidence["a"]
    mix = 0.5 * np.exp(-t) + 0.5 * np.exp(-2 * t)
    mixv = markovianity_test(ScalarKernelSet.from_kernels(grid, {("a", "b"): mix}))
    assert not mixv.markovian and mixv.deviation["a"] > 1e-3


def test_markov_recovers_generator():
    net = validate_network(["1", "2", "3"], [("1", "2", 1.0), ("2", "1", 0.5), ("2", "3", 2.0),
                                             ("3", "1", 0.25)])
    sc = compute_scalar_kernels(decompose(net, [["1"], ["2"], ["3"]]), TimeGrid(20.0, 1e-3))
    v = markovianity_test(sc)
    assert v.markovian
    assert np.abs(v.generator - net.A).max() <= 1e-6


def _db_network():
    # symmetric-similar construction: A = D^{1/2} S D^{-1/2} column convention
    return validate_network(["a", "b", "c"], [("a", "b", 1.0), ("b", "a", 2.0), ("b", "c", 0.5),
                                              ("c", "b", 0.25), ("a", "c", 0.3), ("c", "a", 0.6)])


def test_singleton_spectral_kernel():
    net = two_state()
    sys_ = decompose(net, [["1"], ["2"]])
    sk = detailed_balance_kernel(sys_, detect_detailed_balance(net), "1", "2")
    assert sk.modes == [(1.0, 1.0)]
    assert sk.prefactor == 1.0


def test_two_state_compartment_modes():
    # entrance 1, internal 1 <-> 2 at rate 1, exit 1 -> 3 at rate 1, 3 -> 1 back
    net = validate_network(["1", "2", "3"], [("1", "2", 1.0), ("2", "1", 1.0), ("1", "3", 1.0),
                                             ("3", "1", 1.0)])
    sys_ = decompose(net, [["1", "2"], ["3"]])
    cert = detect_detailed_balance(net)
    sk = detailed_balance_kernel(sys_, cert, "1+2", "3")
    # -A_block = [[2, -1], [-1, 1]], eigenvalues (3 -+ sqrt 5) / 2
    assert np.allclose(sk.rates, [(3 - np.sqrt(5)) / 2, (3 + np.sqrt(5)) / 2], rtol=1e-14)
    assert (sk.weights >= 0).all() and sk.weights.sum() == pytest.approx(1.0, abs=1e-14)
    t = np.linspace(0, 10, 101)
    ref = np.array([scipy.linalg.expm(sys_.block("1+2", "1+2") * x)[0, 0] for x in t])
    assert np.abs(sk(t) - ref).max() <= 1e-12
    assert complete_monotonicity_check(sk(np.arange(2001) * 0.01), 0.01).consistent


def test_monotonicity_examples():
    dt = 0.01
    t = np.arange(2001) * dt
    assert complete_monotonicity_check(np.exp(-t), dt).consistent
    v = complete_monotonicity_check(t * np.exp(-t), dt)
    assert not v.consistent and v.violation[0] == 1 and v.violation[1] < 0.1
    assert "violated at order 1" in v.wording


def test_db_kernel_requires_certificate(chain_system):
    with pytest.raises(InputError):
        detailed_balance_kernel(chain_system, None, "1+2", "3")


def test_perron_examples():
    v, u = perron([[0, 1], [1, 0]])
    assert np.allclose(v, [0.5, 0.5]) and np.allclose(u, [1, 1])
    v, _ = perron(np.roll(np.eye(3), 1, axis=0))
    assert np.allclose(v, 1 / 3)
    v, u = perron([[0, 0.3], [1, 0.7]])
    assert np.allclose(v, [3 / 13, 10 / 13], atol=1e-14)
    assert u @ v == pytest.approx(1.0)
    with pytest.raises(InputError, match="reducible"):
        perron_details([[0.5, 0], [0.5, 1]])
    with pytest.raises(InputError):
        perron_details([[0, -1], [1, 0]])


def test_long_time_symmetric():
    grid = TimeGrid(40.0, 1e-3)
    e = np.exp(-grid.nodes)
    sc = _sym_exp(grid, B0={"1": e}, D0={"2": e}, N0={"2": 1.0})
    res = long_time_limits(sc)
    assert res.c0 == pytest.approx(1.0, abs=1e-4)
    assert np.allclose(res.v0, [0.5, 0.5], atol=1e-12)
    assert res.N_inf["1"] == pytest.approx(0.5, abs=1e-4)
    assert res.N_inf["2"] == pytest.approx(0.5, abs=1e-4)
    assert res.n0_consistent
    assert res.decay_rate > 0


def test_long_time_zero_forcing():
    res = long_time_limits(_sym_exp(TimeGrid(20.0, 1e-2)))
    assert res.c0 == 0.0
    assert np.abs(res.solution.B["1"]).max() == 0.0


def test_long_time_needs_conservative_masses():
    grid = TimeGrid(20.0, 1e-2)
    e = 0.5 * np.exp(-grid.nodes)
    sc = ScalarKernelSet.from_kernels(grid, {("1", "2"): e, ("2", "1"): e})
    with pytest.raises(NumericalError, match="not conservative"):
        long_time_limits(sc)
