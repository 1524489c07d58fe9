import numpy as np
import pytest

from renewalkit import (NetworkError, PartitionError, check_one_entrance, decompose,
                        detect_detailed_balance, network_from_matrix, validate_network)

from conftest import chain, two_state


def test_two_state_generator():
    assert np.array_equal(two_state().A, [[-1.0, 1.0], [1.0, -1.0]])


def test_single_absorbing_state():
    net = validate_network(["1"], [])
    assert np.array_equal(net.A, [[0.0]])


def test_chain_columns_sum_to_zero():
    A = chain().A
    assert np.array_equal(A, [[-1, 0, 0], [1, -1, 0], [0, 1, 0]])
    assert np.abs(A.sum(axis=0)).max() == 0.0


def test_repeated_reactions_are_summed():
    net = validate_network(["a", "b"], [("a", "b", 1.0), {"from": "a", "to": "b", "rate": 0.5}])
    assert net.A[1, 0] == 1.5


@pytest.mark.parametrize("rates, msg", [
    ([("a", "b", -1.0)], "negative rate"),
    ([("a", "a", 1.0)], "self-loop"),
    ([("a", "c", 1.0)], "unknown state"),
    ([("a", "b", float("nan"))], "non-finite"),
    ([{"from": "a", "rate": 1.0}], "lacks field"),
])
def test_invalid_rates(rates, msg):
    with pytest.raises(NetworkError, match=msg):
        validate_network(["a", "b"], rates)


def test_duplicate_states_rejected():
    with pytest.raises(NetworkError, match="duplicate"):
        validate_network(["a", "a"], [])


def test_network_from_matrix_checks_columns():
    with pytest.raises(NetworkError):
        network_from_matrix([[-1.0, 0.0], [0.5, 0.0]])
    net = network_from_matrix([[-1.0, 2.0], [1.0, -2.0]], states=["x", "y"])
    assert list(net.edges()) == [("x", "y", 1.0), ("y", "x", 2.0)]


def test_two_state_singletons():
    sys_ = decompose(two_state(), [["1"], ["2"]])
    assert np.array_equal(sys_.internal("1"), [[0.0]])
    assert np.array_equal(sys_.exit_rates("1"), [[1.0]])
    assert np.array_equal(sys_.block("1", "2"), [[1.0]])
    assert sys_.entrance_points("1") == ("1",)
    assert sys_.entrance_points("2") == ("2",)


def test_chain_blocks():
    sys_ = decompose(chain(), [["1", "2"], ["3"]])
    assert sys_.labels == ("1+2", "3")
    assert np.array_equal(sys_.block("1+2", "1+2"), [[-1, 0], [1, -1]])
    assert np.array_equal(sys_.internal("1+2"), [[-1, 0], [1, 0]])
    assert np.array_equal(sys_.exit_rates("1+2"), np.diag([0.0, 1.0]))
    assert np.array_equal(sys_.assemble(), chain().A)
    v = check_one_entrance(sys_)
    assert v["1+2"].kind == "none"
    assert v["3"].kind == "unique" and v["3"].entrance == "3"


def test_trivial_partition():
    sys_ = decompose(chain(), [["1", "2", "3"]], labels=["all"])
    assert sys_.entrance_points("all") == ()
    assert not sys_.exit_rates("all").any()


def test_complete_graph_unique_entrances():
    states = ["1", "2", "3"]
    net = validate_network(states, [(a, b, 1.0) for a in states for b in states if a != b])
    v = check_one_entrance(decompose(net, [[s] for s in states]))
    assert all(x.kind == "unique" for x in v.values())


def test_parallel_edges_entrances():
    net = validate_network(["1", "2", "3"], [("1", "3", 1.0), ("2", "3", 1.0)])
    assert check_one_entrance(decompose(net, [["1", "2"], ["3"]]))["3"].kind == "unique"
    net = validate_network(["1", "2", "3", "4", "5"],
                           [("1", "3", 1.0), ("2", "3", 1.0), ("1", "4", 1.0), ("2", "5", 1.0)])
    v = check_one_entrance(decompose(net, [["1", "2"], ["3"], ["4", "5"]]))
    assert v["3"].kind == "unique"
    assert v["4+5"].kind == "multiple" and set(v["4+5"].states) == {"4", "5"}


@pytest.mark.parametrize("partition", [
    [["1"], ["2"]],
    [["1", "2"], ["2", "3"]],
    [["1", "2"], ["3", "9"]],
    [["1", "2", "3"], []],
])
def test_bad_partitions(partition):
    with pytest.raises(PartitionError):
        decompose(chain(), partition)


def test_detailed_balance_symmetric():
    cert = detect_detailed_balance(two_state())
    assert cert.holds
    assert np.allclose(cert.mu, [0.5, 0.5], atol=1e-15)
    assert cert.residual == pytest.approx(0.0, abs=1e-15)


def test_detailed_balance_asymmetric_rates():
    net = validate_network(["1", "2"], [("1", "2", 2.0), ("2", "1", 1.0)])
    cert = detect_detailed_balance(net)
    assert cert.holds
    assert np.allclose(cert.mu, [1 / 3, 2 / 3], atol=1e-14)


def test_three_cycle_has_no_certificate():
    net = validate_network(["1", "2", "3"], [("1", "2", 1.0), ("2", "3", 1.0), ("3", "1", 1.0)])
    cert = detect_detailed_balance(net)
    assert not cert.holds
    assert np.allclose(cert.stationary, 1 / 3, atol=1e-14)
    # |lambda_12 mu_2 - lambda_21 mu_1| = 1/3; relative to the largest flux it is 1
    assert cert.residual == pytest.approx(1 / 3, abs=1e-12)
    assert cert.relative_residual == pytest.approx(1.0, abs=1e-12)


def test_disconnected_network_rejected():
    with pytest.raises(NetworkError, match="strongly connected"):
        detect_detailed_balance(chain())
