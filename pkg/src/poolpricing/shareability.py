"""Shareability graph: feasible pooled rides with their pickup/drop-off order.

A ride is feasible when every member prefers it to a private ride under
pooling-favourable flat parameters (low quantiles of the behavioural traits
and a generous flat discount), and nobody's pickup is delayed by more than
``max_pickup_delay``.

Schedule model. The vehicle starts at the first pickup at that traveller's
request time, drives the sequence, and waits at a pickup until the traveller's
request time if it arrives early. For member ``i``::

    pickup delay  tp_i = pickup_time_i - request_time_i          (>= 0)
    shared time   that_i = dropoff_time_i - pickup_time_i

so ``that_i + tp_i = dropoff_time_i - request_time_i``.

Stop orders follow the usual pooling convention: every pickup precedes every
drop-off (for pairs these are the FIFO and LIFO orders). Removing a member
keeps an order of that form and cannot make any stop later (triangle
inequality, max-plus monotonicity), hence feasibility is inherited by
sub-rides and building degree ``k`` rides by insertion into feasible degree
``k - 1`` rides loses nothing.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from itertools import combinations, permutations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from poolpricing.demand import TravelTimeProvider, TripRequest, check_unique_ids
from poolpricing.errors import DomainError
from poolpricing.population import BehavioralMixture, mixture_quantile

log = logging.getLogger(__name__)

PICKUP, DROPOFF = "o", "d"
FEAS_TOL = 1e-9
RANK_TOL_S = 1e-6
RANK_TOL_KM = 1e-9


@dataclass(frozen=True)
class ShareableRide:
    """A ride of one or more travellers.

    Per-member tuples follow ``members`` order. ``sequence`` lists stops as
    ``(traveller_id, "o" | "d")``. Distances in km, times in seconds.
    """

    ride_id: int
    members: tuple[str, ...]
    sequence: tuple[tuple[str, str], ...]
    shared_distance: float
    shared_time: tuple[float, ...]
    pickup_delay: tuple[float, ...]
    private_distance: tuple[float, ...]
    private_time: tuple[float, ...]

    @property
    def degree(self) -> int:
        return len(self.members)

    @property
    def is_private(self) -> bool:
        return len(self.members) == 1

    @property
    def total_private_distance(self) -> float:
        return float(sum(self.private_distance))

    @property
    def distance_saved(self) -> float:
        """Relative mileage reduction if the ride is realised: 1 - d_s / sum(d_i)."""
        return 1.0 - self.shared_distance / self.total_private_distance

    def index_of(self, member: str) -> int:
        try:
            return self.members.index(member)
        except ValueError:
            raise DomainError(f"traveller {member!r} is not in ride {self.ride_id}") from None

    def canonical_key(self) -> tuple:
        return (self.degree, self.members, self.sequence)


@dataclass(frozen=True)
class ShareabilityGraph:
    rides: tuple[ShareableRide, ...]
    travellers: tuple[str, ...]
    by_traveller: dict[str, tuple[int, ...]] = field(compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def ride(self, ride_id: int) -> ShareableRide:
        return self.rides[ride_id]

    def private_ride(self, traveller: str) -> ShareableRide:
        for rid in self.by_traveller[traveller]:
            if self.rides[rid].is_private:
                return self.rides[rid]
        raise DomainError(f"no private ride for {traveller!r}")

    @property
    def shared(self) -> list[ShareableRide]:
        return [r for r in self.rides if not r.is_private]

    def __len__(self) -> int:
        return len(self.rides)


def exmas_feasible(ride: ShareableRide, beta_t0: float, beta_s0: float, lambda0: float, rho: float) -> bool:
    """Every member's shared utility is at least its private utility.

    ``beta_t0`` is in currency per hour; times are converted from seconds.
    """
    for d, t, that, tp in zip(ride.private_distance, ride.private_time, ride.shared_time, ride.pickup_delay):
        shared = -(1.0 - lambda0) * rho * d - beta_t0 * beta_s0 * (that + tp) / 3600.0
        private = -rho * d - beta_t0 * t / 3600.0
        if shared < private - FEAS_TOL:
            return False
    return True


class _Context:
    """Precomputed point matrices for a batch; stop code ``p < n`` is the
    pickup of request ``p``, ``p >= n`` the drop-off of request ``p - n``."""

    def __init__(self, requests: Sequence[TripRequest], provider: TravelTimeProvider):
        self.requests = list(requests)
        n = self.n = len(self.requests)
        pts = np.array([r.origin for r in self.requests] + [r.destination for r in self.requests], dtype=float)
        dist = provider.pairwise_km(pts, pts)
        tt = provider.pairwise_s(pts, pts)
        self.dist = dist.tolist()
        self.time = tt.tolist()
        self.req = [r.request_time for r in self.requests]
        self.d_priv = [self.dist[i][i + n] for i in range(n)]
        self.t_priv = [self.time[i][i + n] for i in range(n)]
        for i, d in enumerate(self.d_priv):
            if not d > 0:
                raise DomainError(f"request {self.requests[i].id}: zero-length trip")

    def schedule(self, seq: Sequence[int]) -> tuple[float, dict[int, float], dict[int, float]]:
        """Return (distance, that per member, tp per member) for a stop sequence."""
        n, T, D, req = self.n, self.time, self.dist, self.req
        prev = seq[0]
        clock = req[prev]
        dist = 0.0
        pick = {prev: clock}
        that: dict[int, float] = {}
        for s in seq[1:]:
            clock += T[prev][s]
            dist += D[prev][s]
            if s < n:
                if clock < req[s]:
                    clock = req[s]
                pick[s] = clock
            else:
                that[s - n] = clock - pick[s - n]
            prev = s
        tp = {i: pick[i] - req[i] for i in pick}
        return dist, that, tp

    def make_ride(self, members: Sequence[int], seq: Sequence[int], ride_id: int = -1) -> ShareableRide:
        n = self.n
        members = tuple(sorted(members))
        ids = tuple(self.requests[i].id for i in members)
        stops = tuple((self.requests[s % n].id, PICKUP if s < n else DROPOFF) for s in seq)
        if len(members) == 1:
            i = members[0]
            return ShareableRide(ride_id, ids, stops, self.d_priv[i], (self.t_priv[i],), (0.0,),
                                 (self.d_priv[i],), (self.t_priv[i],))
        dist, that, tp = self.schedule(seq)
        return ShareableRide(
            ride_id, ids, stops, dist,
            tuple(that[i] for i in members), tuple(tp[i] for i in members),
            tuple(self.d_priv[i] for i in members), tuple(self.t_priv[i] for i in members),
        )


@dataclass(frozen=True)
class _Filter:
    beta_t0: float
    beta_s0: float
    lambda0: float
    rho: float
    max_pickup_delay: float

    def accepts(self, ctx: _Context, seq: Sequence[int]) -> tuple[bool, float, float]:
        """Feasibility of a sequence plus its ranking key (total that+tp, distance)."""
        dist, that, tp = ctx.schedule(seq)
        total = 0.0
        for i, th in that.items():
            p = tp[i]
            if p > self.max_pickup_delay + FEAS_TOL:
                return False, 0.0, 0.0
            d, t = ctx.d_priv[i], ctx.t_priv[i]
            shared = -(1.0 - self.lambda0) * self.rho * d - self.beta_t0 * self.beta_s0 * (th + p) / 3600.0
            private = -self.rho * d - self.beta_t0 * t / 3600.0
            if shared < private - FEAS_TOL:
                return False, 0.0, 0.0
            total += th + p
        return True, total, dist


def valid_sequences(members: Sequence[int], n: int) -> Iterable[tuple[int, ...]]:
    """All stop orders: a permutation of pickups followed by a permutation of drop-offs."""
    members = tuple(sorted(members))
    for picks in permutations(members):
        for drops in permutations(members):
            yield picks + tuple(m + n for m in drops)


def _insertions(seq: tuple[int, ...], pickup: int, dropoff: int) -> Iterable[tuple[int, ...]]:
    """Orders obtained by adding one member to a pickups-then-drop-offs order."""
    k = len(seq) // 2
    picks, drops = seq[:k], seq[k:]
    for a in range(k + 1):
        p = picks[:a] + (pickup,) + picks[a:]
        for b in range(k + 1):
            yield p + drops[:b] + (dropoff,) + drops[b:]


def _best(cands: list[tuple[float, float, tuple[int, ...]]]) -> tuple[int, ...]:
    """Lowest total that+tp, then shortest distance, then smallest stop codes.

    Totals within RANK_TOL_S seconds (distances within RANK_TOL_KM) count as
    equal, so rounding noise between equivalent schedules never decides.
    """
    top = min(c[0] for c in cands)
    cands = [c for c in cands if c[0] <= top + RANK_TOL_S]
    short = min(c[1] for c in cands)
    return min(c[2] for c in cands if c[1] <= short + RANK_TOL_KM)


def graph_quantiles(mix: BehavioralMixture, alpha: float) -> tuple[float, float]:
    return mixture_quantile(mix, "vot", alpha), mixture_quantile(mix, "pfs", alpha)


def build_graph(
    requests: Sequence[TripRequest],
    provider: TravelTimeProvider,
    mix: BehavioralMixture | None = None,
    alpha: float = 0.2,
    lambda0: float = 0.4,
    rho: float = 1.5,
    max_degree: int = 4,
    max_pickup_delay: float = 600.0,
    *,
    beta_t0: float | None = None,
    beta_s0: float | None = None,
) -> ShareabilityGraph:
    """Hierarchical construction of all feasible rides up to ``max_degree``.

    Quantile parameters come from ``mix`` at level ``alpha`` unless
    ``beta_t0``/``beta_s0`` are given explicitly. Among feasible stop orders
    of a member set the one with least total (that + tp), then least distance,
    is kept.
    """
    if max_degree < 1:
        raise DomainError("max_degree must be >= 1")
    check_unique_ids(requests)
    if beta_t0 is None or beta_s0 is None:
        if mix is None:
            raise DomainError("need a behavioural mixture or explicit quantile parameters")
        if not 0 < alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        q_t, q_s = graph_quantiles(mix, alpha)
        beta_t0 = q_t if beta_t0 is None else beta_t0
        beta_s0 = q_s if beta_s0 is None else beta_s0
    ctx = _Context(requests, provider)
    flt = _Filter(beta_t0, beta_s0, lambda0, rho, max_pickup_delay)
    n = ctx.n

    best: dict[tuple[int, ...], tuple[int, ...]] = {(i,): (i, i + n) for i in range(n)}
    feasible: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
    if max_degree >= 2:
        for i, j in combinations(range(n), 2):
            ok_seqs, ranks = [], []
            for seq in ((i, j, i + n, j + n), (i, j, j + n, i + n), (j, i, j + n, i + n), (j, i, i + n, j + n)):
                ok, total, dist = flt.accepts(ctx, seq)
                if ok:
                    ok_seqs.append(seq)
                    ranks.append((total, dist, seq))
            if ok_seqs:
                feasible[(i, j)] = ok_seqs
                best[(i, j)] = _best(ranks)
    level = sorted(feasible)
    log.debug("degree 2: %d feasible rides", len(level))
    for k in range(3, max_degree + 1):
        nxt: dict[tuple[int, ...], list[tuple[int, ...]]] = {}
        for parent in level:
            for m in range(parent[-1] + 1, n):
                cand = parent + (m,)
                if any(cand[:x] + cand[x + 1:] not in feasible for x in range(k - 1)):
                    continue
                ok_seqs, ranks = [], []
                for pseq in feasible[parent]:
                    for seq in _insertions(pseq, m, m + n):
                        ok, total, dist = flt.accepts(ctx, seq)
                        if ok:
                            ok_seqs.append(seq)
                            ranks.append((total, dist, seq))
                if ok_seqs:
                    nxt[cand] = ok_seqs
                    best[cand] = _best(ranks)
        feasible.update(nxt)
        level = sorted(nxt)
        log.debug("degree %d: %d feasible rides", k, len(level))
        if not level:
            break

    return assemble_graph(ctx, best, params=dict(
        beta_t0=beta_t0, beta_s0=beta_s0, lambda0=lambda0, rho=rho, alpha=alpha,
        max_degree=max_degree, max_pickup_delay=max_pickup_delay,
    ))


def assemble_graph(ctx: _Context, best: dict[tuple[int, ...], tuple[int, ...]], params: dict | None = None) -> ShareabilityGraph:
    """Order rides canonically (degree, member indices, sequence) and number them."""
    keys = sorted(best, key=lambda ms: (len(ms), ms, best[ms]))
    rides = tuple(ctx.make_ride(ms, best[ms], ride_id=rid) for rid, ms in enumerate(keys))
    index: dict[str, list[int]] = {r.id: [] for r in ctx.requests}
    for r in rides:
        for m in r.members:
            index[m].append(r.ride_id)
    return ShareabilityGraph(rides, tuple(r.id for r in ctx.requests),
                             {k: tuple(v) for k, v in index.items()}, params or {})


def make_context(requests: Sequence[TripRequest], provider: TravelTimeProvider) -> _Context:
    return _Context(requests, provider)


def _fmt_list(xs: Iterable) -> str:
    return ";".join(repr(float(x)) if not isinstance(x, str) else x for x in xs)


def write_rides_csv(graph: ShareabilityGraph, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ride_id", "members", "sequence", "degree", "d_s_km", "that_s", "tp_s"])
        for r in graph.rides:
            w.writerow([
                r.ride_id, ";".join(r.members), ";".join(f"{kind}:{tid}" for tid, kind in r.sequence),
                r.degree, repr(r.shared_distance), _fmt_list(r.shared_time), _fmt_list(r.pickup_delay),
            ])
