"""End-to-end study: demand -> shareability graph -> pricing per strategy -> offer."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from poolpricing.acceptance import AcceptanceCurve, build_curves
from poolpricing.demand import TravelTimeProvider, TripRequest, load_matrix_provider, load_requests
from poolpricing.errors import ConfigError
from poolpricing.experiment.config import DemandParams, ScenarioConfig, Strategy
from poolpricing.matching import Offer, solve_offer
from poolpricing.population import BehavioralMixture, DiscretizedGrid, LinearDegreeRule, discretize
from poolpricing.pricing import PricedRide, PricingConfig, flat_vector, optimize_discounts, price_at, price_private
from poolpricing.shareability import ShareabilityGraph, build_graph

log = logging.getLogger(__name__)


def generate_demand(params: DemandParams, seed: int) -> list[TripRequest]:
    """Uniform origins/destinations over the area, uniform request times.

    Pairs shorter than ``min_trip_km`` (straight line) are redrawn.
    """
    n = int(round(params.rate_per_hour * params.batch_minutes / 60.0))
    if n <= 0:
        return []
    if params.min_trip_km >= math.hypot(params.area_x_km, params.area_y_km):
        raise ConfigError("min_trip_km exceeds the area diagonal")
    rng = np.random.default_rng(seed)
    lo, hi = np.zeros(2), np.array([params.area_x_km, params.area_y_km])
    out = []
    for i in range(n):
        while True:
            o, d = rng.uniform(lo, hi), rng.uniform(lo, hi)
            if math.hypot(*(o - d)) >= params.min_trip_km:
                break
        t = rng.uniform(0.0, params.batch_minutes * 60.0)
        out.append(TripRequest(str(i), (float(o[0]), float(o[1])), (float(d[0]), float(d[1])), float(t)))
    return out


def make_provider(cfg: ScenarioConfig) -> TravelTimeProvider:
    if cfg.provider == "matrix":
        return load_matrix_provider(cfg.matrix, cfg.speed_kmh)
    return TravelTimeProvider(mode=cfg.provider, speed_kmh=cfg.speed_kmh)


def pricing_config(cfg: ScenarioConfig) -> PricingConfig:
    return PricingConfig(rho=cfg.rho, lambda_hat=cfg.lambda_hat, shared_weights=cfg.shared_weights,
                         private_weights=cfg.private_weights, lambda_cap=cfg.lambda_cap,
                         degree_rule=LinearDegreeRule(cfg.degree_epsilon))


@dataclass
class RideRecord:
    ride_id: int
    degree: int
    discounts: tuple[float, ...]
    Gamma: float
    O: float
    psi: float
    accept_prob: float
    distance_saved: float
    selected: bool


@dataclass
class StrategyReport:
    strategy: Strategy
    n_travellers: int
    offer: Offer
    priced: dict[int, PricedRide] = field(repr=False)
    records: list[RideRecord] = field(repr=False)

    @property
    def name(self) -> str:
        return self.strategy.name

    @property
    def average_profitability(self) -> float:
        return self.offer.total_objective / self.n_travellers if self.n_travellers else 0.0

    @property
    def total_expected_distance(self) -> float:
        return math.fsum(self.priced[r].psi for r in self.offer.selected)

    def degree_histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for r in self.offer.selected:
            deg = self.priced[r].degree
            hist[deg] = hist.get(deg, 0) + 1
        return dict(sorted(hist.items()))

    @property
    def mean_degree(self) -> float:
        return self.n_travellers / len(self.offer.selected) if self.offer.selected else 0.0

    def shared_discounts(self, scope: str) -> list[float]:
        return [d for rec in self.records if rec.degree > 1 and (scope == "graph" or rec.selected)
                for d in rec.discounts]

    def kpis(self) -> dict:
        offer_shared = self.shared_discounts("offer")
        hist = self.degree_histogram()
        return {
            "average_expected_profitability": self.average_profitability,
            "total_expected_distance": self.total_expected_distance,
            "total_objective": self.offer.total_objective,
            "travellers": self.n_travellers,
            "rides_selected": len(self.offer.selected),
            "mean_ride_degree": self.mean_degree,
            "private_travellers": hist.get(1, 0),
            "degree_histogram": {str(k): v for k, v in hist.items()},
            "mean_offer_shared_discount": (math.fsum(offer_shared) / len(offer_shared)) if offer_shared else None,
        }


@dataclass
class PipelineResult:
    config: ScenarioConfig
    requests: list[TripRequest]
    graph: ShareabilityGraph
    reports: list[StrategyReport]
    timings: dict[str, float] = field(default_factory=dict)

    def report(self, name: str) -> StrategyReport:
        for r in self.reports:
            if r.name == name:
                return r
        raise KeyError(name)


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage
        self.original = exc


def _map(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=64))


def price_strategy(strategy: Strategy, graph: ShareabilityGraph, curves: dict[int, list[AcceptanceCurve]],
                   pcfg: PricingConfig, thinning: int, threads: int = 1) -> dict[int, PricedRide]:
    priced: dict[int, PricedRide] = {}
    if strategy.kind == "private":
        # ride-hailing baseline: private rides only, full fare
        for ride in graph.rides:
            if ride.is_private:
                priced[ride.ride_id] = price_private(ride, pcfg, lam=0.0)
        return priced
    for ride in graph.rides:
        if ride.is_private:
            priced[ride.ride_id] = price_private(ride, pcfg)
    shared = graph.shared
    if strategy.kind == "personalised":
        results = _map(lambda r: optimize_discounts(r, curves[r.ride_id], pcfg, thinning), shared, threads)
    else:
        results = [price_at(r, curves[r.ride_id], flat_vector(r, strategy.value, pcfg), pcfg) for r in shared]
    for p in results:
        priced[p.ride_id] = p
    return priced


def _records(graph: ShareabilityGraph, priced: dict[int, PricedRide], offer: Offer) -> list[RideRecord]:
    chosen = set(offer.selected)
    out = []
    for rid in sorted(priced):
        p, ride = priced[rid], graph.rides[rid]
        out.append(RideRecord(rid, ride.degree, p.discounts, p.Gamma, p.O, p.psi, p.accept_prob,
                              ride.distance_saved, rid in chosen))
    return out


def resolve_requests(cfg: ScenarioConfig) -> list[TripRequest]:
    if cfg.requests is not None:
        return load_requests(cfg.requests)
    return generate_demand(cfg.demand, cfg.seed)


def build_stage(cfg: ScenarioConfig, requests: list[TripRequest]) -> tuple[ShareabilityGraph, DiscretizedGrid]:
    try:
        provider = make_provider(cfg)
        graph = build_graph(requests, provider, cfg.mixture, cfg.alpha, cfg.lambda0, cfg.rho,
                            cfg.max_degree, cfg.max_pickup_delay)
    except ConfigError:
        raise
    except Exception as exc:
        raise PipelineStageError("graph", exc) from exc
    grid = discretize(cfg.mixture, cfg.n_vot, cfg.n_pfs)
    return graph, grid


def run_pipeline(cfg: ScenarioConfig, requests: list[TripRequest] | None = None, threads: int = 1,
                 match: bool = True) -> PipelineResult:
    """Run every configured strategy on one shared graph and one set of curves."""
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    requests = resolve_requests(cfg) if requests is None else requests
    graph, grid = build_stage(cfg, requests)
    timings["graph"] = time.perf_counter() - t0
    pcfg = pricing_config(cfg)

    t0 = time.perf_counter()
    try:
        curves = dict(zip(
            (r.ride_id for r in graph.shared),
            _map(lambda r: build_curves(r, grid, cfg.rho, pcfg.degree_rule), graph.shared, threads)))
    except Exception as exc:
        raise PipelineStageError("acceptance", exc) from exc
    timings["curves"] = time.perf_counter() - t0

    reports = []
    for strategy in cfg.strategies:
        t0 = time.perf_counter()
        try:
            priced = price_strategy(strategy, graph, curves, pcfg, cfg.thinning, threads)
        except Exception as exc:
            raise PipelineStageError(f"pricing:{strategy.name}", exc) from exc
        timings[f"pricing:{strategy.name}"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            offer = solve_offer(graph, priced) if match and graph.travellers else Offer((), {}, 0.0)
        except Exception as exc:
            raise PipelineStageError(f"matching:{strategy.name}", exc) from exc
        timings[f"matching:{strategy.name}"] = time.perf_counter() - t0
        reports.append(StrategyReport(strategy, len(graph.travellers), offer, priced,
                                      _records(graph, priced, offer)))
        log.info("%s: average profitability %.4f, expected distance %.2f", strategy.name,
                 reports[-1].average_profitability, reports[-1].total_expected_distance)
    return PipelineResult(cfg, requests, graph, reports, timings)


def mixture_summary(mix: BehavioralMixture) -> list[dict]:
    return [dict(name=c.name, mean_vot=c.mean_vot, std_vot=c.std_vot, mean_pfs=c.mean_pfs,
                 std_pfs=c.std_pfs, share=c.share) for c in mix.classes]
