"""Linear reaction networks, compartment decompositions and detailed balance.

Generator convention: state vectors are columns and ``dn/dt = A n``.  The
entry ``A[i, j]`` (``i != j``) is the rate of the reaction ``j -> i``, so every
column of ``A`` sums to zero.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import NetworkError, PartitionError

__all__ = [
    "ReactionNetwork",
    "Compartment",
    "CompartmentSystem",
    "EntranceVerdict",
    "DetailedBalanceCertificate",
    "validate_network",
    "network_from_matrix",
    "decompose",
    "check_one_entrance",
    "detect_detailed_balance",
    "is_strongly_connected",
]


@dataclass(frozen=True)
class ReactionNetwork:
    """A finite linear reaction network.

    Attributes
    ----------
    states : tuple of str
        State identifiers, in matrix order.
    A : ndarray, shape (n, n)
        Generator, ``A[i, j]`` = rate of ``states[j] -> states[i]``.
    """

    states: tuple
    A: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.A.setflags(write=False)

    @property
    def size(self):
        return len(self.states)

    def index(self, state):
        try:
            return self._index[state]
        except AttributeError:
            object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.states)})
            return self._index[state]

    def edges(self):
        """Yield ``(source, target, rate)`` for every positive off-diagonal rate."""
        n = self.size
        for j in range(n):
            for i in range(n):
                if i != j and self.A[i, j] > 0:
                    yield self.states[j], self.states[i], float(self.A[i, j])

    def max_rate(self):
        if self.size < 2:
            return 0.0
        off = self.A - np.diag(np.diag(self.A))
        return float(off.max())


def validate_network(states, rates):
    """Assemble and validate a generator from a list of reactions.

    Parameters
    ----------
    states : sequence of str
        Unique state names.
    rates : iterable
        Reactions given as mappings with keys ``from``, ``to``, ``rate`` or as
        ``(from, to, rate)`` tuples.  Repeated reactions between the same
        pair of states are added together.

    Returns
    -------
    ReactionNetwork
    """
    states = tuple(str(s) for s in states)
    if not states:
        raise NetworkError("network has no states")
    seen = {}
    for k, s in enumerate(states):
        if s in seen:
            raise NetworkError(f"duplicate state {s!r} (positions {seen[s]} and {k})")
        seen[s] = k
    n = len(states)
    A = np.zeros((n, n))
    for entry in rates:
        if isinstance(entry, dict):
            try:
                src, dst, r = entry["from"], entry["to"], entry["rate"]
            except KeyError as exc:
                raise NetworkError(f"rate entry {entry!r} lacks field {exc.args[0]!r}") from None
        else:
            src, dst, r = entry
        src, dst = str(src), str(dst)
        for s in (src, dst):
            if s not in seen:
                raise NetworkError(f"rate entry {src}->{dst} refers to unknown state {s!r}")
        try:
            r = float(r)
        except (TypeError, ValueError):
            raise NetworkError(f"rate entry {src}->{dst} has non-numeric rate {r!r}") from None
        if not np.isfinite(r):
            raise NetworkError(f"rate entry {src}->{dst} has non-finite rate {r}")
        if r < 0:
            raise NetworkError(f"negative rate {r} on edge {src}->{dst}")
        if src == dst:
            raise NetworkError(f"self-loop edge {src}->{dst}")
        A[seen[dst], seen[src]] += r
    A[np.diag_indices(n)] = 0.0
    A[np.diag_indices(n)] = -A.sum(axis=0)
    return ReactionNetwork(states, A)


def network_from_matrix(A, states=None, tol=1e-12):
    """Wrap a generator matrix, checking sign pattern and column sums."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NetworkError(f"generator must be square, got shape {A.shape}")
    n = A.shape[0]
    if states is None:
        states = [str(i + 1) for i in range(n)]
    off = A - np.diag(np.diag(A))
    if (off < 0).any():
        i, j = np.argwhere(off < 0)[0]
        raise NetworkError(f"negative rate {A[i, j]} on edge {states[j]}->{states[i]}")
    scale = max(1.0, float(np.abs(A).max()))
    colsum = A.sum(axis=0)
    if np.abs(colsum).max() > tol * scale:
        j = int(np.abs(colsum).argmax())
        raise NetworkError(f"column {states[j]} sums to {colsum[j]:.3g}, not zero")
    rates = [(states[j], states[i], off[i, j]) for i, j in zip(*np.nonzero(off))]
    return validate_network(states, rates)


@dataclass(frozen=True)
class Compartment:
    label: str
    states: tuple
    index: np.ndarray = field(repr=False)  # positions in the network ordering

    @property
    def size(self):
        return len(self.states)


@dataclass(frozen=True)
class EntranceVerdict:
    kind: str  # "unique", "none" or "multiple"
    states: tuple

    @property
    def entrance(self):
        return self.states[0] if self.kind == "unique" else None


class CompartmentSystem:
    """A network together with a partition of its states into compartments.

    ``block(alpha, beta)`` is the submatrix ``A[alpha, beta]`` (rows in
    ``alpha``, columns in ``beta``); it carries the flux from ``beta`` into
    ``alpha``.  Each diagonal block splits as ``E - C`` where ``E`` is a
    generator on the compartment and ``C`` is the diagonal matrix of exit
    rates.
    """

    def __init__(self, network, compartments):
        self.network = network
        self.compartments = tuple(compartments)
        self.labels = tuple(c.label for c in self.compartments)
        self._by_label = {c.label: c for c in self.compartments}
        A = network.A
        self._blocks = {}
        for a in self.compartments:
            for b in self.compartments:
                blk = A[np.ix_(a.index, b.index)].copy()
                blk.setflags(write=False)
                self._blocks[a.label, b.label] = blk
        self._exit = {}
        self._internal = {}
        self._entrances = {}
        for a in self.compartments:
            Aaa = self._blocks[a.label, a.label]
            exit_rates = -Aaa.sum(axis=0)
            exit_rates[exit_rates < 0] = 0.0  # rounding noise only
            C = np.diag(exit_rates)
            E = Aaa + C
            C.setflags(write=False)
            E.setflags(write=False)
            self._exit[a.label] = C
            self._internal[a.label] = E
            inflow = np.zeros(a.size, dtype=bool)
            for b in self.compartments:
                if b.label != a.label:
                    inflow |= (self._blocks[a.label, b.label] > 0).any(axis=1)
            self._entrances[a.label] = tuple(s for s, f in zip(a.states, inflow) if f)

    def __repr__(self):
        parts = ", ".join(f"{c.label}:{list(c.states)}" for c in self.compartments)
        return f"CompartmentSystem({parts})"

    def __getitem__(self, label):
        return self._by_label[label]

    @property
    def size(self):
        return len(self.compartments)

    def block(self, alpha, beta):
        return self._blocks[alpha, beta]

    def internal(self, alpha):
        """E_{alpha alpha}: the block with exit rates removed from the diagonal."""
        return self._internal[alpha]

    def exit_rates(self, alpha):
        """C_alpha as a diagonal matrix."""
        return self._exit[alpha]

    def entrance_points(self, alpha):
        return self._entrances[alpha]

    def local_index(self, alpha, state):
        return self._by_label[alpha].states.index(state)

    def order(self):
        """Network indices of all states, compartment by compartment."""
        return np.concatenate([c.index for c in self.compartments])

    def assemble(self):
        """Rebuild the full generator from its blocks."""
        A = np.zeros_like(self.network.A)
        for a in self.compartments:
            for b in self.compartments:
                A[np.ix_(a.index, b.index)] = self._blocks[a.label, b.label]
        return A


def _default_label(states):
    return "+".join(states)


def decompose(network, partition, labels=None):
    """Split a network into compartments.

    Parameters
    ----------
    network : ReactionNetwork
    partition : sequence of sequences of state names, or mapping
        Either a list of blocks or a mapping ``label -> block``.
    labels : sequence of str, optional
        Compartment names when ``partition`` is a list.  Defaults to the
        member names joined with ``+`` (a singleton keeps its state name).
    """
    if isinstance(partition, dict):
        labels = [str(k) for k in partition]
        blocks = [list(v) for v in partition.values()]
    else:
        blocks = [list(b) for b in partition]
    blocks = [[str(s) for s in b] for b in blocks]
    if labels is None:
        labels = [_default_label(b) for b in blocks]
    labels = [str(x) for x in labels]
    if len(labels) != len(blocks):
        raise PartitionError(f"{len(labels)} labels for {len(blocks)} compartments")
    if len(set(labels)) != len(labels):
        raise PartitionError("compartment labels are not unique")
    owner = {}
    comps = []
    for lab, b in zip(labels, blocks):
        if not b:
            raise PartitionError(f"compartment {lab!r} is empty")
        for s in b:
            if s not in network.states:
                raise PartitionError(f"compartment {lab!r} contains unknown state {s!r}")
            if s in owner:
                raise PartitionError(f"state {s!r} appears in compartments {owner[s]!r} and {lab!r}")
            owner[s] = lab
        idx = np.array([network.index(s) for s in b], dtype=np.intp)
        idx.setflags(write=False)
        comps.append(Compartment(lab, tuple(b), idx))
    missing = [s for s in network.states if s not in owner]
    if missing:
        raise PartitionError(f"partition does not cover states {missing}")
    return CompartmentSystem(network, comps)


def check_one_entrance(system):
    """Classify the entrance points of every compartment.

    Returns
    -------
    dict
        ``label -> EntranceVerdict`` with kind ``"unique"``, ``"none"`` or
        ``"multiple"``.
    """
    out = {}
    for lab in system.labels:
        pts = system.entrance_points(lab)
        kind = "none" if not pts else ("unique" if len(pts) == 1 else "multiple")
        out[lab] = EntranceVerdict(kind, pts)
    return out


def _reach(adj, start):
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    todo = deque([start])
    while todo:
        v = todo.popleft()
        for w in np.nonzero(adj[v])[0]:
            if not seen[w]:
                seen[w] = True
                todo.append(w)
    return seen


def is_strongly_connected(adj):
    """Reachability test on a boolean adjacency matrix ``adj[u, v]`` (edge u->v)."""
    adj = np.asarray(adj, dtype=bool)
    if adj.shape[0] <= 1:
        return True
    return bool(_reach(adj, 0).all() and _reach(adj.T, 0).all())


@dataclass(frozen=True)
class DetailedBalanceCertificate:
    """Outcome of a detailed-balance test.

    ``mu`` is the stationary distribution when the pairwise balance holds and
    ``None`` otherwise.  ``residual`` is ``max |A_ij mu_j - A_ji mu_i|`` and
    ``relative_residual`` divides it by the largest stationary flux
    ``A_ij mu_j``.
    """

    mu: np.ndarray
    residual: float
    relative_residual: float
    stationary: np.ndarray = field(repr=False)
    tol: float = 0.0

    @property
    def holds(self):
        return self.mu is not None


def detect_detailed_balance(network, tol=None):
    """Test a network for detailed balance.

    The stationary vector is the right singular vector of ``A`` for its
    smallest singular value, made positive and normalized to sum one.

    Parameters
    ----------
    network : ReactionNetwork
    tol : float, optional
        Absolute residual tolerance; defaults to ``1e-9 * max rate``.
    """
    A = network.A
    n = network.size
    adj = (A.T > 0)
    np.fill_diagonal(adj, False)
    if not is_strongly_connected(adj):
        raise NetworkError("network is not strongly connected; stationary vector is not unique")
    if n == 1:
        mu = np.ones(1)
    else:
        _, _, vt = np.linalg.svd(A)
        mu = vt[-1].copy()
        if mu.sum() < 0:
            mu = -mu
        if (mu <= 0).any():
            raise NetworkError("null vector of the generator has non-positive entries")
        mu /= mu.sum()
    flux = A * mu[None, :]
    off = flux - np.diag(np.diag(flux))
    resid = float(np.abs(off - off.T).max()) if n > 1 else 0.0
    peak = float(off.max()) if n > 1 else 0.0
    rel = resid / peak if peak > 0 else 0.0
    if tol is None:
        tol = 1e-9 * max(network.max_rate(), np.finfo(float).tiny)
    mu.setflags(write=False)
    return DetailedBalanceCertificate(
        mu if resid <= tol else None, resid, rel, mu, float(tol)
    )
