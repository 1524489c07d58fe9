"""File formats: network documents, kernel and solution tables, phase-type models.

Tables are comma-separated text with one header line; every number is
written with 12 significant digits.  All writers go through a temporary file
in the target directory followed by an atomic rename.
"""
import csv
import io as _io
import json
import os
import re
import tempfile

import numpy as np

from .errors import InputError
from .kernels import ScalarKernelSet, TimeGrid
from .network import validate_network
from .phasetype import PhaseTypeModel

__all__ = [
    "atomic_write",
    "write_json",
    "read_json",
    "read_network_file",
    "network_document",
    "write_network_file",
    "write_table",
    "read_table",
    "kernel_table",
    "forcing_table",
    "scalar_kernel_table",
    "scalar_kernels_from_table",
    "solution_table",
    "write_age_densities",
    "write_models",
    "read_models",
]

FLOAT_FMT = "%.12g"


def atomic_write(path, text):
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _round_floats(obj):
    if isinstance(obj, float):
        return float(FLOAT_FMT % obj) if np.isfinite(obj) else None
    if isinstance(obj, (np.floating,)):
        return _round_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist())
    return obj


def write_json(path, obj):
    atomic_write(path, json.dumps(_round_floats(obj), indent=2) + "\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def read_network_file(path):
    """Read a network document.

    Fields: ``states`` (list of names), ``rates`` (list of
    ``{from, to, rate}``), optional ``partition`` (list of lists of names),
    optional ``labels`` (one per block) and optional ``n0`` (mapping from
    state to initial amount).

    Returns
    -------
    (ReactionNetwork, list or None, list or None, dict or None)
    """
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise InputError(f"{path}: top level must be an object")
    for key in ("states", "rates"):
        if key not in doc:
            raise InputError(f"{path}: missing field {key!r}")
    net = validate_network(doc["states"], doc["rates"])
    partition = doc.get("partition")
    if partition is not None:
        if not isinstance(partition, list) or not all(isinstance(b, list) for b in partition):
            raise InputError(f"{path}: 'partition' must be an array of arrays of state names")
        partition = [[str(s) for s in b] for b in partition]
    labels = doc.get("labels")
    if labels is not None:
        labels = [str(x) for x in labels]
    n0 = doc.get("n0")
    if n0 is not None:
        if isinstance(n0, list):
            if len(n0) != net.size:
                raise InputError(f"{path}: 'n0' has {len(n0)} entries for {net.size} states")
            n0 = dict(zip(net.states, n0))
        elif not isinstance(n0, dict):
            raise InputError(f"{path}: 'n0' must map state names to amounts")
        n0 = {str(k): float(v) for k, v in n0.items()}
    return net, partition, labels, n0


def network_document(network, partition=None, labels=None, n0=None):
    doc = {
        "states": list(network.states),
        "rates": [{"from": s, "to": d, "rate": float(r)} for s, d, r in network.edges()],
    }
    if partition is not None:
        if isinstance(partition, dict):
            labels = list(partition) if labels is None else labels
            partition = [list(partition[k]) for k in partition]
        doc["partition"] = [list(b) for b in partition]
    if labels is not None:
        doc["labels"] = list(labels)
    if n0 is not None:
        doc["n0"] = {str(k): float(v) for k, v in n0.items()}
    return doc


def write_network_file(path, network, partition=None, labels=None, n0=None):
    write_json(path, network_document(network, partition, labels, n0))


def write_table(path, columns, data):
    data = np.asarray(data, dtype=float) + 0.0  # no negative zeros in the output
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != len(columns):
        raise ValueError(f"{len(columns)} column names for {data.shape[1]} columns")
    buf = _io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(columns)
    np.savetxt(buf, data, fmt=FLOAT_FMT, delimiter=",")
    atomic_write(path, buf.getvalue())


def read_table(path):
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except (StopIteration, ValueError) as exc:
        raise InputError(f"{path} is not a numeric table: {exc}") from None
    if data.size and data.shape[1] != len(header):
        raise InputError(f"{path}: header has {len(header)} names, rows have {data.shape[1]} values")
    return header, data


def kernel_table(kernels):
    """Columns ``t``, ``G[beta->alpha][i,j]`` and ``K[alpha][i,j]`` (local state indices)."""
    cols, data = ["t"], [kernels.grid.nodes]
    for (b, a), g in kernels.G.items():
        for i in range(g.shape[1]):
            for j in range(g.shape[2]):
                cols.append(f"G[{b}->{a}][{i},{j}]")
                data.append(g[:, i, j])
    for a in kernels.labels:
        K = kernels.K[a]
        for i in range(K.shape[1]):
            for j in range(K.shape[2]):
                cols.append(f"K[{a}][{i},{j}]")
                data.append(K[:, i, j])
    return cols, np.column_stack(data)


def forcing_table(kernels):
    cols, data = ["t"], [kernels.grid.nodes]
    for name, src in (("S0", kernels.S0), ("J0", kernels.J0)):
        for a in kernels.labels:
            for i in range(src[a].shape[1]):
                cols.append(f"{name}[{a}][{i}]")
                data.append(src[a][:, i])
    return cols, np.column_stack(data)


def scalar_kernel_table(scalar):
    """Columns ``t``, ``Phi[alpha->beta]``, ``k[alpha]``, ``B0[alpha]``, ``D0[alpha]``."""
    cols, data = ["t"], [scalar.grid.nodes]
    for a in scalar.labels:
        for b in scalar.labels:
            if a != b:
                cols.append(f"Phi[{a}->{b}]")
                data.append(scalar.Phi[a, b])
    for name, src in (("k", scalar.k), ("B0", scalar.B0), ("D0", scalar.D0)):
        for a in scalar.labels:
            cols.append(f"{name}[{a}]")
            data.append(src[a])
    return cols, np.column_stack(data)


_PHI = re.compile(r"^Phi\[(.+?)->(.+)\]$")
_ONE = re.compile(r"^(B0|D0|k)\[(.+)\]$")


def grid_from_nodes(t):
    t = np.asarray(t, dtype=float)
    if t.size < 2 or t[0] != 0.0:
        raise InputError("time column must start at 0 and have at least two nodes")
    dt = float(np.median(np.diff(t)))
    if np.abs(np.diff(t) - dt).max() > 1e-9 * max(1.0, t[-1]):
        raise InputError("time column is not uniformly spaced")
    t_max = (t.size - 1) * dt
    return TimeGrid(t_max, dt)


def scalar_kernels_from_table(columns, data, N0=None):
    """Rebuild a :class:`ScalarKernelSet` from a table written by :func:`scalar_kernel_table`.

    Only ``t`` and ``Phi`` columns are required; ``k`` is recomputed.
    """
    if not columns or columns[0] != "t":
        raise InputError("kernel table must start with a 't' column")
    grid = grid_from_nodes(data[:, 0])
    Phi, B0, D0, labels = {}, {}, {}, []
    for j, name in enumerate(columns[1:], start=1):
        m = _PHI.match(name)
        if m:
            a, b = m.group(1), m.group(2)
            Phi[a, b] = data[:, j]
            for x in (a, b):
                if x not in labels:
                    labels.append(x)
            continue
        m = _ONE.match(name)
        if m:
            if m.group(1) == "B0":
                B0[m.group(2)] = data[:, j]
            elif m.group(1) == "D0":
                D0[m.group(2)] = data[:, j]
            continue
        raise InputError(f"unrecognized kernel column {name!r}")
    if not Phi:
        raise InputError("kernel table has no Phi columns")
    return ScalarKernelSet.from_kernels(grid, Phi, B0, D0, N0, labels=labels)


def solution_table(sol):
    cols, data = ["t"], [sol.grid.nodes]
    for a in sol.labels:
        cols.append(f"N[{a}]")
        data.append(sol.N[a])
    if sol.scalar:
        for name, src in (("B", sol.B), ("D", sol.D)):
            for a in sol.labels:
                cols.append(f"{name}[{a}]")
                data.append(src[a])
    else:
        for name, src in (("S", sol.S), ("J", sol.J)):
            for a in sol.labels:
                for i in range(src[a].shape[1]):
                    cols.append(f"{name}[{a}][{i}]")
                    data.append(src[a][:, i])
    return cols, np.column_stack(data)


def _safe(label):
    return re.sub(r"[^A-Za-z0-9_.+-]", "_", str(label))


def write_age_densities(folder, density):
    """One file per compartment: first column ``t``, then one column per age node."""
    paths = {}
    ages = density.ages
    cols = ["t"] + [FLOAT_FMT % a for a in ages]
    for a in density.rates.labels:
        path = os.path.join(folder, f"age_density_{_safe(a)}.csv")
        write_table(path, cols, np.column_stack([density.snapshot_times, density.f[a]]))
        paths[a] = path
    return paths


def write_models(path, models):
    write_json(path, {"models": [m.to_dict() for m in models]})


def read_models(path):
    doc = read_json(path)
    items = doc.get("models", [doc]) if isinstance(doc, dict) else doc
    return [PhaseTypeModel.from_dict(d) for d in items]
