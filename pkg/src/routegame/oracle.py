"""Brute-force verifiers for tiny instances.

These exhaustive scans share no definitions with the iterative solvers:
the equilibrium oracle measures each player's best-deviation improvement
over its own flow grid (an epsilon-equilibrium certificate), and the
optimum oracle grid-minimizes the total delay. They exist only to provide
independent ground truth on two- and three-path instances.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .calculus import (
    LoadProfile,
    coefficient_table,
    poly_antiderivative,
    poly_eval,
)
from .netmodel import IncidenceStructure, Network, OdSpec

MAX_GRID_CELLS = 8_000_000


def _simplex_grid(n_paths: int, total: float, grid_n: int) -> np.ndarray:
    """Uniform grid over {x >= 0, sum x = total}, one row per point,
    ordered lexicographically by grid index."""
    if total <= 0.0:
        return np.zeros((1, n_paths))
    if n_paths == 1:
        return np.array([[total]])
    h = np.linspace(0.0, total, grid_n)
    if n_paths == 2:
        return np.column_stack([h, total - h])
    if n_paths == 3:
        rows = []
        for i, t1 in enumerate(h):
            for t2 in h[: grid_n - i]:
                rows.append((t1, t2, total - t1 - t2))
        return np.array(rows)
    if n_paths == 4:
        rows = []
        for i, t1 in enumerate(h):
            for j, t2 in enumerate(h[: grid_n - i]):
                for t3 in h[: grid_n - i - j]:
                    rows.append((t1, t2, t3, total - t1 - t2 - t3))
        return np.array(rows)
    raise ValueError(f"grid enumeration limited to 4 paths (got {n_paths})")


def brute_force_equilibrium(
    net: Network,
    inc: IncidenceStructure,
    ods: Sequence[OdSpec],
    grid_n: int = 2001,
) -> tuple[LoadProfile, float]:
    """Exhaustive epsilon-equilibrium search over both players' flow grids.

    Every pair of grid flows is scored by the larger of the two players'
    best-deviation improvements (each player's improvement is the gap to
    the exact minimum of its cost over its own grid, holding the opponent
    fixed); the minimizer is returned together with that score. Ties break
    lexicographically by grid index.
    """
    if len(ods) != 1:
        raise ValueError("the equilibrium oracle handles a single OD pair")
    if inc.n_paths > 3:
        raise ValueError("the equilibrium oracle handles at most 3 paths")
    od = ods[0]

    ZS = _simplex_grid(inc.n_paths, od.demand_selfish, grid_n)
    ZC = _simplex_grid(inc.n_paths, od.demand_fleet, grid_n)
    if ZS.shape[0] * ZC.shape[0] > MAX_GRID_CELLS:
        raise ValueError(
            f"grid too large ({ZS.shape[0]} x {ZC.shape[0]} cells)"
        )

    coeffs = coefficient_table(net)
    A = inc.matrix
    FS = ZS @ A.T  # (nS, L)
    FC = ZC @ A.T  # (nC, L)

    US = np.zeros((FS.shape[0], FC.shape[0]))
    UC = np.zeros_like(US)
    for l in range(net.n_links):
        c_l = coeffs[l]
        fs = FS[:, l][:, None]
        fc = FC[:, l][None, :]
        F = fs + fc
        US += poly_antiderivative(c_l, F) - poly_antiderivative(c_l, fc)
        UC += fc * poly_eval(c_l, F, 0)

    improvement_S = US - US.min(axis=0, keepdims=True)
    improvement_C = UC - UC.min(axis=1, keepdims=True)
    certificate = np.maximum(improvement_S, improvement_C)
    flat = int(np.argmin(certificate))
    i, j = divmod(flat, certificate.shape[1])
    load = LoadProfile(fS=FS[i], fC=FC[j])
    return load, float(certificate[i, j])


def brute_force_optimum(
    net: Network,
    inc: IncidenceStructure,
    D_total: float,
    grid_n: int = 2001,
) -> tuple[np.ndarray, float]:
    """Grid minimization of the total delay over aggregate path flows."""
    if len(net.od_pairs) != 1:
        raise ValueError("the optimum oracle handles a single OD pair")
    Y = _simplex_grid(inc.n_paths, D_total, grid_n)
    if Y.shape[0] > MAX_GRID_CELLS:
        raise ValueError(f"grid too large ({Y.shape[0]} cells)")
    coeffs = coefficient_table(net)
    F = Y @ inc.matrix.T
    T = np.sum(F * poly_eval(coeffs, F, 0), axis=1)
    best = int(np.argmin(T))
    return F[best], float(T[best])
