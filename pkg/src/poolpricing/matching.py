"""Offer selection: exact set partitioning of travellers into priced rides.

maximise   sum_r O_r x_r
subject to sum_{r ∋ i} x_r = 1   for every traveller i,   x_r in {0, 1}

solved per connected component by depth-first branch-and-bound. Node bounds
are Lagrangian bounds built from the LP relaxation's equality duals, so they
are valid upper bounds whatever the solver tolerances. Among optimal
partitions (within ``TIE_REL`` relative) the lexicographically smallest
sorted ride-id tuple is returned.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from poolpricing.errors import ContractError
from poolpricing.pricing import PricedRide
from poolpricing.shareability import ShareabilityGraph

TIE_REL = 1e-9
IMPROVE_REL = 1e-12
INT_TOL = 1e-9


@dataclass(frozen=True)
class Offer:
    selected: tuple[int, ...]
    assignment: dict[str, int] = field(compare=False)
    total_objective: float
    kpis: dict = field(default_factory=dict, compare=False)


class _Component:
    """One connected block of the partitioning problem."""

    def __init__(self, ride_ids: list[int], rows: list[list[int]], values: list[float], n_rows: int):
        self.ride_ids = ride_ids
        self.c = np.asarray(values, dtype=float)
        n = len(ride_ids)
        indptr, indices = [0], []
        for r in rows:
            indices.extend(r)
            indptr.append(len(indices))
        # ride-major incidence, transposed to traveller-major for the LP
        self.R = csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n_rows))
        self.A = self.R.T.tocsr()
        self.rows = rows
        self.n = n
        self.m = n_rows
        conflicts: list[set[int]] = [set() for _ in range(n)]
        by_row: list[list[int]] = [[] for _ in range(n_rows)]
        for j, r in enumerate(rows):
            for t in r:
                by_row[t].append(j)
        for members in by_row:
            for j in members:
                conflicts[j].update(members)
        self.conflicts = [np.array(sorted(s - {j}), dtype=int) for j, s in enumerate(conflicts)]
        self.lp_calls = 0

    # -- LP -----------------------------------------------------------------
    def lp(self, lb: np.ndarray, ub: np.ndarray):
        """Solve the relaxation; return (x, lagrangian upper bound) or None if infeasible."""
        self.lp_calls += 1
        res = linprog(-self.c, A_eq=self.A, b_eq=np.ones(self.m), bounds=np.column_stack([lb, ub]),
                      method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"LP relaxation failed: {res.message}")
        y = np.asarray(res.eqlin.marginals, dtype=float)
        self.y = y
        self.d = -self.c - self.A.T @ y
        return np.asarray(res.x), self.bound(lb, ub)

    def bound(self, lb: np.ndarray, ub: np.ndarray) -> float:
        """Upper bound on the max objective over the box [lb, ub] for the last duals."""
        d = self.d
        low = self.y.sum() + float(np.sum(np.where(d > 0, d * lb, d * ub)))
        return -low

    # -- fixing helpers -------------------------------------------------------
    def fix_one(self, lb: np.ndarray, ub: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
        lb, ub = lb.copy(), ub.copy()
        lb[j] = ub[j] = 1.0
        ub[self.conflicts[j]] = 0.0
        return lb, ub

    def fix_zero(self, lb: np.ndarray, ub: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
        ub = ub.copy()
        ub[j] = 0.0
        return lb, ub

    def value(self, x: np.ndarray) -> float:
        return math.fsum(self.c[np.nonzero(x > 0.5)[0]])

    def integral(self, x: np.ndarray) -> np.ndarray | None:
        xr = np.round(x)
        if np.max(np.abs(x - xr)) > INT_TOL:
            return None
        if not np.all(self.A @ xr == 1.0):
            return None
        return xr

    # -- search ---------------------------------------------------------------
    def search(self, lb: np.ndarray, ub: np.ndarray, threshold: float | None = None):
        """Depth-first branch-and-bound.

        With ``threshold`` None, returns an optimal (value, x). Otherwise
        returns the first solution with value >= threshold, or None.
        """
        best_val, best_x = -math.inf, None
        stack = [(lb, ub)]
        while stack:
            lb_n, ub_n = stack.pop()
            if np.any(lb_n > ub_n):
                continue
            out = self.lp(lb_n, ub_n)
            if out is None:
                continue
            x, bnd = out
            scale = max(1.0, abs(bnd))
            if threshold is not None:
                if bnd < threshold - IMPROVE_REL * scale:
                    continue
            elif best_x is not None and bnd <= best_val + IMPROVE_REL * scale:
                continue
            xi = self.integral(x)
            if xi is not None:
                val = self.value(xi)
                if threshold is not None:
                    if val >= threshold:
                        return val, xi
                elif best_x is None or val > best_val + IMPROVE_REL * max(1.0, abs(best_val)):
                    best_val, best_x = val, xi
                    continue
                # LP optimum integral but below target; keep branching for alternatives
            frac = np.abs(x - 0.5)
            free = (lb_n < ub_n)
            frac = np.where(free, frac, np.inf)
            j = int(np.argmin(frac))
            if not np.isfinite(frac[j]):
                continue
            stack.append(self.fix_zero(lb_n, ub_n, j))
            stack.append(self.fix_one(lb_n, ub_n, j))
        if threshold is not None:
            return None
        return best_val, best_x

    def survivors(self, threshold: float) -> np.ndarray:
        """Rides that may appear in a partition worth at least ``threshold``.

        Uses the root duals: forcing ride j to 1 (and its conflicts to 0)
        gives a Lagrangian bound; rides whose bound falls short are dropped.
        """
        if self.lp(np.zeros(self.n), np.ones(self.n)) is None:
            raise ContractError("partitioning problem infeasible")
        d = self.d
        neg = np.minimum(d, 0.0)
        low0 = self.y.sum() + neg.sum()
        bounds = np.array([-(low0 + max(d[j], 0.0) - neg[self.conflicts[j]].sum())
                           for j in range(self.n)])
        slack = IMPROVE_REL * max(1.0, abs(threshold))
        return np.nonzero(bounds >= threshold - slack)[0]

    def restrict(self, keep: np.ndarray) -> "_Component":
        return _Component([self.ride_ids[j] for j in keep], [self.rows[j] for j in keep],
                          self.c[keep].tolist(), self.m)

    def solve(self) -> tuple[float, np.ndarray]:
        lb, ub = np.zeros(self.n), np.ones(self.n)
        z, x = self.search(lb, ub)
        if x is None:
            raise ContractError("partitioning problem infeasible")
        threshold = z - TIE_REL * max(1.0, abs(z))
        keep = self.survivors(threshold)
        if keep.size < self.n:
            sub = self.restrict(keep)
            _, xs = sub.refine(threshold, x[keep])
            x = np.zeros(self.n)
            x[keep] = xs
            return self.value(x), x
        return self.refine(threshold, x)

    def refine(self, threshold: float, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Lexicographic refinement among partitions worth at least ``threshold``.

        Walk rides in id order, keeping ride j whenever some partition
        consistent with the earlier decisions contains it.
        """
        lb, ub = np.zeros(self.n), np.ones(self.n)
        slack = IMPROVE_REL * max(1.0, abs(threshold))
        stale = True
        for j in np.argsort(self.ride_ids, kind="stable"):
            if lb[j] == ub[j]:
                continue
            if x[j] > 0.5:
                lb, ub = self.fix_one(lb, ub, j)
                stale = True
                continue
            if stale:
                # fresh duals at the current node make the test below tight
                self.lp(lb, ub)
                stale = False
            lb1, ub1 = self.fix_one(lb, ub, j)
            if self.bound(lb1, ub1) >= threshold - slack:
                out = self.search(lb1, ub1, threshold)
                stale = True
                if out is not None:
                    x = out[1]
                    lb, ub = lb1, ub1
                    continue
            lb, ub = self.fix_zero(lb, ub, j)
        return self.value(x), x


def _components(rides: Sequence[tuple[int, tuple[str, ...]]]) -> list[list[int]]:
    parent: dict[str, str] = {}

    def find(a: str) -> str:
        while parent.setdefault(a, a) != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for _, members in rides:
        root = find(members[0])
        for m in members[1:]:
            parent[find(m)] = root
    groups: dict[str, list[int]] = {}
    for pos, (_, members) in enumerate(rides):
        groups.setdefault(find(members[0]), []).append(pos)
    return sorted(groups.values(), key=lambda g: g[0])


def solve_offer(graph: ShareabilityGraph, priced: Mapping[int, PricedRide] | Iterable[PricedRide]) -> Offer:
    """Exact maximum-objective partition of the travellers into priced rides."""
    if not isinstance(priced, Mapping):
        priced = {p.ride_id: p for p in priced}
    covered = set()
    rides = []
    for rid in sorted(priced):
        ride = graph.rides[rid]
        rides.append((rid, ride.members))
        if ride.is_private:
            covered.add(ride.members[0])
    missing = [t for t in graph.travellers if t not in covered]
    if missing:
        raise ContractError(f"travellers without a priced private ride: {missing[:5]}")
    selected: list[int] = []
    for comp in _components(rides):
        travellers = sorted({m for pos in comp for m in rides[pos][1]})
        row = {t: i for i, t in enumerate(travellers)}
        ids = [rides[pos][0] for pos in comp]
        block = _Component(ids, [[row[m] for m in rides[pos][1]] for pos in comp],
                           [priced[rid].O for rid in ids], len(travellers))
        if block.n == 1:
            selected.append(ids[0])
            continue
        _, x = block.solve()
        selected.extend(ids[j] for j in np.nonzero(x > 0.5)[0])
    selected.sort()
    assignment = {m: rid for rid in selected for m in graph.rides[rid].members}
    total = math.fsum(priced[rid].O for rid in selected)
    return Offer(tuple(selected), assignment, total)


# -- brute force ------------------------------------------------------------------


def all_matchings(graph: ShareabilityGraph, ride_ids: Iterable[int] | None = None) -> Iterable[tuple[int, ...]]:
    """Every partition of the travellers into rides of the graph (sorted id tuples)."""
    allowed = set(range(len(graph.rides)) if ride_ids is None else ride_ids)
    order = list(graph.travellers)

    def rec(covered: frozenset[str], chosen: tuple[int, ...]):
        rest = [t for t in order if t not in covered]
        if not rest:
            yield tuple(sorted(chosen))
            return
        head = rest[0]
        for rid in graph.by_traveller[head]:
            if rid not in allowed:
                continue
            members = graph.rides[rid].members
            if covered.isdisjoint(members):
                yield from rec(covered | set(members), chosen + (rid,))

    yield from rec(frozenset(), ())


def brute_force_offer(graph: ShareabilityGraph, priced: Mapping[int, PricedRide]) -> Offer:
    """Partition enumeration with the same tie rule as :func:`solve_offer`."""
    scored = [(math.fsum(priced[r].O for r in m), m) for m in all_matchings(graph, priced.keys())]
    top = max(v for v, _ in scored)
    threshold = top - TIE_REL * max(1.0, abs(top))
    value, sel = min(((v, m) for v, m in scored if v >= threshold), key=lambda vm: vm[1])
    return Offer(sel, {t: r for r in sel for t in graph.rides[r].members}, value)


# -- decomposition check --------------------------------------------------------------


@dataclass(frozen=True)
class LocalGlobalResult:
    decomposed: float
    joint: float
    ok: bool


def local_global_values(graph: ShareabilityGraph, curves: Mapping[int, Sequence], cfg,
                        tol: float = 1e-9, max_combinations: int = 50_000_000) -> LocalGlobalResult:
    """Compare ride-level argmax + matching with a joint brute force.

    The joint search enumerates every matching and, within it, every
    assignment of (unthinned) candidate discount vectors to its shared
    rides; the per-matching maximum is taken over the full outer sum of
    ride objectives, so no decomposition is assumed.
    """
    from poolpricing.acceptance import candidate_discounts
    from poolpricing.pricing import _gamma_psi, optimize_discounts, price_private

    priced = {}
    vec_scores: dict[int, np.ndarray] = {}
    for ride in graph.rides:
        if ride.is_private:
            priced[ride.ride_id] = price_private(ride, cfg)
            continue
        cs = curves[ride.ride_id]
        priced[ride.ride_id] = optimize_discounts(ride, cs, cfg, thinning=0)
        grids = np.meshgrid(*[np.array(candidate_discounts(c, cfg.lambda_hat, 0, cfg.lambda_cap)) for c in cs],
                            indexing="ij")
        lams = [g.ravel() for g in grids]
        probs = [c(lam) for c, lam in zip(cs, lams)]
        gamma, psi, _ = _gamma_psi(np.asarray(ride.private_distance), ride.shared_distance, lams, probs,
                                   cfg.rho, cfg.lambda_hat)
        vec_scores[ride.ride_id] = np.asarray(cfg.weights_for(ride).score(gamma, psi)) * ride.degree
    decomposed = solve_offer(graph, priced).total_objective

    joint = -math.inf
    for matching in all_matchings(graph):
        fixed = math.fsum(priced[r].O for r in matching if graph.rides[r].is_private)
        shared = [vec_scores[r] for r in matching if not graph.rides[r].is_private]
        if int(np.prod([s.size for s in shared])) > max_combinations:
            raise ContractError("joint enumeration too large for this instance")
        total = np.zeros(())
        for s in shared:
            total = np.add.outer(total, s)
        joint = max(joint, fixed + float(total.max()))
    return LocalGlobalResult(decomposed, joint, abs(decomposed - joint) <= tol * max(1.0, abs(joint)))


def verify_local_global(graph: ShareabilityGraph, curves: Mapping[int, Sequence], cfg, tol: float = 1e-9) -> bool:
    return local_global_values(graph, curves, cfg, tol).ok


# -- export ---------------------------------------------------------------------------

OFFER_HEADER = ["traveller_id", "ride_id", "degree", "discount", "expected_profitability"]


def write_offer_csv(offer: Offer, graph: ShareabilityGraph, priced: Mapping[int, PricedRide],
                    path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OFFER_HEADER)
        for t in graph.travellers:
            rid = offer.assignment[t]
            ride = graph.rides[rid]
            p = priced[rid]
            w.writerow([t, rid, ride.degree, repr(p.discounts[ride.index_of(t)]), repr(p.Gamma)])
