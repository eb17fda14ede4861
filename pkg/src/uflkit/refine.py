"""Level-by-level modification of a hierarchical decomposition so that no
point is separated from its guiding facility at a level high enough to make
the pair badly cut. Each level remains a partition; nesting across levels is
deliberately not maintained."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .hierarchy import HierarchicalDecomposition, badly_cut_threshold, f0_point_ids


class Move(NamedTuple):
    level: int
    point: int
    from_cluster: int
    to_cluster: int


@dataclass
class RefinedDecomposition:
    """Per-level memberships after the moves; clusters keep their original
    ids, so there is a one-to-one cluster correspondence with the base."""

    base: HierarchicalDecomposition
    eps: float
    ddim: float
    f0_ids: np.ndarray           # guiding facility id per point
    membership: np.ndarray       # (ell+2, n) cluster id per point per level
    moves: list[Move]

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def ell(self) -> int:
        return self.base.ell

    def members(self, cid: int, level: int | None = None) -> np.ndarray:
        level = self.base.clusters[cid].level if level is None else level
        return np.flatnonzero(self.membership[level] == cid)


def eliminate_badly_cut(H: HierarchicalDecomposition, f0, eps: float,
                        ddim: float) -> RefinedDecomposition:
    """Independently at every level, move each point x whose cluster differs
    from its guiding facility's cluster, provided the level is at or above
    log2(ddim * dist(x, F0(x)) / (eps^2 * gamma)).

    Guiding facilities never move, so the processing order is immaterial;
    points are handled in ascending id order.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if ddim < 1.0:
        raise ValueError("ddim must be at least 1")
    ids = f0_point_ids(f0, H.n)
    d_to_f0 = H.metric.matrix[np.arange(H.n), ids]
    thresholds = np.full(H.n, -np.inf)
    nz = d_to_f0 > 0
    thresholds[nz] = np.log2(ddim * d_to_f0[nz] / (eps * eps * H.gamma))

    membership = H.membership.copy()
    moves: list[Move] = []
    for level in range(H.ell + 2):
        own = H.membership[level]
        target = own[ids]
        to_move = np.flatnonzero((own != target) & (level >= thresholds))
        for x in to_move:
            moves.append(Move(level, int(x), int(own[x]), int(target[x])))
        membership[level, to_move] = target[to_move]
    return RefinedDecomposition(base=H, eps=eps, ddim=ddim, f0_ids=ids,
                                membership=membership, moves=moves)


class ConsistencyReport(NamedTuple):
    violations: list[tuple[int, int, int, float, float]]  # level, cluster, point, dist, radius

    @property
    def ok(self) -> bool:
        return not self.violations


def consistency_check(T: RefinedDecomposition) -> ConsistencyReport:
    """Verify that every modified cluster stays within distance
    eps^2 * 2^level * gamma of its original cluster."""
    H = T.base
    D = H.metric.matrix
    violations = []
    for level in range(H.ell + 2):
        radius = T.eps ** 2 * H.rang(level)
        changed = np.flatnonzero(T.membership[level] != H.membership[level])
        for x in changed:
            cid = int(T.membership[level, x])
            orig = H.clusters[cid].members
            d = float(D[x, orig].min())
            if d > radius * (1 + 1e-9):
                violations.append((level, cid, int(x), d, radius))
    return ConsistencyReport(violations)


def check_guided_pairs_uncut(T: RefinedDecomposition) -> list[tuple[int, int]]:
    """(level, point) pairs where a point and its guiding facility are still
    in different clusters at a qualifying level; empty by construction."""
    H = T.base
    bad = []
    for x in range(H.n):
        f = int(T.f0_ids[x])
        if f == x:
            continue
        thr = badly_cut_threshold(float(H.metric.matrix[x, f]), T.eps, H.gamma, T.ddim)
        for level in range(H.ell + 2):
            if level >= thr and T.membership[level, x] != T.membership[level, f]:
                bad.append((level, x))
    return bad


def moves_to_csv(T: RefinedDecomposition) -> str:
    buf = io.StringIO()
    buf.write("level,point_id,from_cluster,to_cluster\n")
    for mv in T.moves:
        buf.write(f"{mv.level},{mv.point},{mv.from_cluster},{mv.to_cluster}\n")
    return buf.getvalue()
