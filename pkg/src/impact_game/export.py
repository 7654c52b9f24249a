"""CSV and JSON writers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import TrajectorySet


def trajectory_header(n: int) -> list:
    return ["t"] + [f"Q_{i + 1}" for i in range(n)] + [f"q_{i + 1}" for i in range(n)]


def export_csv(trajectories: TrajectorySet, path) -> None:
    """Columns ``t, Q_1..Q_n, q_1..q_n`` at 17 significant digits."""
    n = trajectories.n_agents
    table = np.column_stack([trajectories.grid.nodes, trajectories.Q.T, trajectories.q.T])
    np.savetxt(path, table, fmt="%.17g", delimiter=",", header=",".join(trajectory_header(n)),
               comments="", newline="\n")


def read_csv(path):
    """Inverse of ``export_csv``: returns ``(t, Q, q)`` with ``Q``, ``q`` shaped (n, nodes)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = (len(header) - 1) // 2
    return data[:, 0], data[:, 1:1 + n].T, data[:, 1 + n:].T


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")
