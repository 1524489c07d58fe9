import numpy as np
import pytest

from renewalkit import (EntranceError, GridError, TimeGrid, compute_forcing,
                        compute_kernels, compute_scalar_kernels, decompose,
                        kernel_mass_report, reduce_one_entrance, suggest_t_max,
                        validate_network)

from conftest import chain, random_generator, two_state


def test_grid_validation():
    g = TimeGrid(1.0, 0.25)
    assert g.n == 5 and np.allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert g.refine().n == 9
    with pytest.raises(GridError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(GridError):
        TimeGrid(1.0, 0.0)
    with pytest.raises(GridError):
        TimeGrid(-1.0, 0.1)


def test_two_state_kernels(two_state_system):
    grid = TimeGrid(5.0, 0.01)
    ks = compute_kernels(two_state_system, grid)
    e = np.exp(-grid.nodes)
    assert np.abs(ks.G["1", "2"][:, 0, 0] - e).max() <= 1e-14
    assert np.abs(ks.K["1"][:, 0, 0] - e).max() <= 1e-14
    assert ks.conservation_defect() <= 1e-15


def test_chain_outflow_kernel(chain_system):
    grid = TimeGrid(10.0, 0.01)
    ks = compute_kernels(chain_system, grid)
    t = grid.nodes
    total = ks.K["1+2"][:, :, 0].sum(axis=1)
    assert np.abs(total - t * np.exp(-t)).max() <= 1e-14
    assert not ks.K["3"].any()  # no exits
    assert ks.inflow("3", "1+2").shape == (grid.n, 2, 1) and not ks.inflow("3", "1+2").any()


def test_forcing(two_state_system, chain_system):
    grid = TimeGrid(5.0, 0.01)
    e = np.exp(-grid.nodes)
    S0, J0 = compute_forcing(two_state_system, grid, {"1": 1.0})
    assert np.abs(S0["2"][:, 0] - e).max() <= 1e-14
    assert np.abs(J0["1"][:, 0] - e).max() <= 1e-14
    assert not S0["1"].any() and not J0["2"].any()
    S0, J0 = compute_forcing(chain_system, grid, {"1": 1.0})
    assert np.abs(J0["1+2"].sum(axis=1) - grid.nodes * e).max() <= 1e-14
    S0, J0 = compute_forcing(chain_system, grid, None)
    assert not any(a.any() for a in list(S0.values()) + list(J0.values()))


def test_forcing_with_and_without_kernels():
    rng = np.random.default_rng(3)
    A = random_generator(rng, 6)
    states = [str(i) for i in range(6)]
    net = validate_network(states, [(states[j], states[i], A[i, j])
                                    for i in range(6) for j in range(6) if i != j and A[i, j] > 0])
    sys_ = decompose(net, [states[:2], states[2:5], states[5:]])
    grid = TimeGrid(3.0, 0.01)
    n0 = rng.random(6)
    a = compute_forcing(sys_, grid, n0)
    b = compute_forcing(sys_, grid, n0, kernels=compute_kernels(sys_, grid))
    for x, y in zip(a, b):
        for lab in x:
            assert np.abs(x[lab] - y[lab]).max() <= 1e-13


def test_chain_scalar_kernel(chain_system):
    grid = TimeGrid(10.0, 0.01)
    sc = reduce_one_entrance(compute_kernels(chain_system, grid))
    t = grid.nodes
    assert np.abs(sc.Phi["1+2", "3"] - t * np.exp(-t)).max() <= 1e-14
    assert not sc.Phi["3", "1+2"].any()


def test_two_state_scalar_mass():
    grid = TimeGrid(40.0, 1e-3)
    sc = compute_scalar_kernels(decompose(two_state(), [["1"], ["2"]]), grid)
    assert np.abs(sc.Phi["1", "2"] - np.exp(-grid.nodes)).max() <= 1e-14
    assert sc.masses["1", "2"] == pytest.approx(1.0, abs=1e-6)
    rep = kernel_mass_report(sc)
    assert rep["1"].status == "conservative"


def test_scalar_paths_agree():
    rng = np.random.default_rng(11)
    A = random_generator(rng, 7, density=0.6)
    states = [str(i) for i in range(7)]
    net = validate_network(states, [(states[j], states[i], A[i, j])
                                    for i in range(7) for j in range(7) if i != j and A[i, j] > 0])
    sys_ = decompose(net, [[s] for s in states])
    grid = TimeGrid(4.0, 0.01)
    n0 = rng.random(7)
    ks = compute_kernels(sys_, grid)
    S0, J0 = compute_forcing(sys_, grid, n0, kernels=ks)
    a = reduce_one_entrance(ks.with_forcing(S0, J0))
    b = compute_scalar_kernels(sys_, grid, n0)
    for key in a.Phi:
        assert np.abs(a.Phi[key] - b.Phi[key]).max() <= 1e-13
    for lab in a.labels:
        assert np.abs(a.B0[lab] - b.B0[lab]).max() <= 1e-13
        assert np.abs(a.D0[lab] - b.D0[lab]).max() <= 1e-13
        assert np.abs(a.k[lab] - b.k[lab]).max() <= 1e-13


def test_internal_sink_is_leaky():
    # 1 -> 2 absorbing inside the compartment, 1 -> 3 the only exit
    net = validate_network(["1", "2", "3"], [("1", "2", 1.0), ("1", "3", 1.0)])
    sys_ = decompose(net, [["1", "2"], ["3"]])
    sc = compute_scalar_kernels(sys_, TimeGrid(40.0, 1e-3), roots={"1+2": "1"})
    assert sc.total_mass("1+2") == pytest.approx(0.5, abs=1e-6)
    assert kernel_mass_report(sc)["1+2"].status == "leaky"
    assert kernel_mass_report(sc)["3"].status == "sink"


def test_truncated_mass():
    sc = compute_scalar_kernels(decompose(two_state(), [["1"], ["2"]]), TimeGrid(1.0, 1e-3))
    rep = kernel_mass_report(sc)
    assert rep["1"].total == pytest.approx(1 - np.exp(-1), abs=1e-6)
    assert rep["1"].status == "truncated"


def test_multiple_entrances_refused():
    net = validate_network(["1", "2", "4", "5"], [("1", "4", 1.0), ("2", "5", 1.0)])
    sys_ = decompose(net, [["1"], ["2"], ["4", "5"]])
    with pytest.raises(EntranceError, match="multiple entrance points"):
        compute_scalar_kernels(sys_, TimeGrid(1.0, 0.1))


def test_suggest_t_max(two_state_system, chain_system):
    overall, per = suggest_t_max(two_state_system)
    assert overall == pytest.approx(-np.log(1e-8), rel=1e-12)
    overall, per = suggest_t_max(chain_system)
    assert per["3"] is None
    assert per["1+2"] == pytest.approx(-np.log(1e-8), rel=1e-9)
