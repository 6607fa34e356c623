"""Expected revenue, distance and profitability of a priced ride; discount search.

A shared ride offered with discounts (lam_1..lam_k) is realised only when all
members accept. A member who accepts keeps the guaranteed discount
``lambda_hat`` if the ride collapses; one who rejects pays the full fare.
With independent decisions and p_j = P(member j accepts), P = prod p_j::

    E[revenue]  = sum_j P*R_j(lam_j) + (p_j - P)*R_j(lambda_hat) + (1 - p_j)*R_j(0)
    E[distance] = P*d_shared + (1 - P)*sum_j d_j

where R_j(lam) = rho * (1 - lam) * d_j. The first line is the 2^k scenario
sum regrouped per member; :func:`enumeration_oracle` keeps the explicit sum.
"""

from __future__ import annotations

import csv
import itertools
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from poolpricing.acceptance import AcceptanceCurve, candidate_discounts, ride_acceptance, thresholds
from poolpricing.errors import ContractError, DomainError
from poolpricing.population import DEFAULT_DEGREE_RULE, DegreeRule, DiscretizedGrid
from poolpricing.shareability import ShareableRide

TIE_TOL = 1e-12
MAX_BLOCK = 2_000_000


@dataclass(frozen=True)
class ObjectiveWeights:
    """score = profitability*gamma/psi + revenue*gamma - distance_cost*psi - flat_cost"""

    profitability: float = 1.0
    revenue: float = 0.0
    distance_cost: float = 0.0
    flat_cost: float = 0.0

    def __post_init__(self) -> None:
        if not all(np.isfinite([self.profitability, self.revenue, self.distance_cost, self.flat_cost])):
            raise DomainError("objective weights must be finite")

    def score(self, gamma, psi, ratio=None):
        """``ratio`` may supply gamma/psi when it is known in closed form."""
        ratio = gamma / psi if ratio is None else ratio
        return self.profitability * ratio + self.revenue * gamma - self.distance_cost * psi - self.flat_cost

    @property
    def is_profitability(self) -> bool:
        return (self.profitability, self.revenue, self.distance_cost, self.flat_cost) == (1.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PricingConfig:
    rho: float = 1.5
    lambda_hat: float = 0.05
    shared_weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    private_weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)
    lambda_cap: float = 1.0
    degree_rule: DegreeRule = DEFAULT_DEGREE_RULE

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise DomainError("fare rho must be positive")
        if not 0 <= self.lambda_hat < 1:
            raise DomainError("guaranteed discount must lie in [0, 1)")
        if not self.lambda_hat <= self.lambda_cap <= 1:
            raise DomainError("lambda_cap must lie in [lambda_hat, 1]")

    def weights_for(self, ride: ShareableRide) -> ObjectiveWeights:
        return self.private_weights if ride.is_private else self.shared_weights


@dataclass(frozen=True)
class PricedRide:
    ride_id: int
    degree: int
    discounts: tuple[float, ...]
    gamma: float
    psi: float
    Gamma: float
    score: float
    O: float
    accept_prob: float

    @classmethod
    def from_values(cls, ride: ShareableRide, discounts: Sequence[float], gamma: float, psi: float,
                    accept_prob: float, weights: ObjectiveWeights, ratio: float | None = None) -> "PricedRide":
        ratio = gamma / psi if ratio is None else ratio
        score = float(weights.score(gamma, psi, ratio))
        return cls(ride.ride_id, ride.degree, tuple(float(x) for x in discounts), float(gamma), float(psi),
                   float(ratio), score, score * ride.degree, float(accept_prob))


def revenue(d: float, lam: float, cfg: PricingConfig) -> float:
    if not 0 <= lam <= 1:
        raise DomainError(f"discount must lie in [0, 1], got {lam!r}")
    return cfg.rho * (1.0 - lam) * d


def private_ratio(rho: float, lam: float) -> float:
    """rho * (1 - lam) rounded once from the decimal values of its inputs.

    Fares and discounts are given as decimals (1.5, 0.05); multiplying the
    binary floats can land one ulp off the decimal product (1.4249999999999998).
    """
    return float(Fraction(repr(float(rho))) * (1 - Fraction(repr(float(lam)))))


def _check(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float]) -> None:
    if not (len(curves) == len(discounts) == ride.degree):
        raise ContractError(f"ride {ride.ride_id} has degree {ride.degree}: got {len(curves)} curves "
                            f"and {len(discounts)} discounts")
    for lam in discounts:
        if not 0 <= lam <= 1:
            raise DomainError(f"discount must lie in [0, 1], got {lam!r}")


def _gamma_psi(d: np.ndarray, d_s: float, lams: Sequence, probs: Sequence, rho: float, lhat: float):
    """Factored expected revenue and distance; lams/probs may be broadcastable arrays."""
    P = 1.0
    for p in probs:
        P = P * p
    gamma = 0.0
    for dj, lam, p in zip(d, lams, probs):
        r_full = rho * dj
        gamma = gamma + P * r_full * (1.0 - lam) + (p - P) * r_full * (1.0 - lhat) + (1.0 - p) * r_full
    psi = P * d_s + (1.0 - P) * float(np.sum(d))
    return gamma, psi, P


def _probs(curves: Sequence[AcceptanceCurve], discounts: Sequence[float]) -> list[float]:
    return [c(lam) for c, lam in zip(curves, discounts)]


def expected_revenue(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float],
                     cfg: PricingConfig) -> float:
    _check(ride, curves, discounts)
    g, _, _ = _gamma_psi(np.asarray(ride.private_distance), ride.shared_distance, discounts,
                         _probs(curves, discounts), cfg.rho, cfg.lambda_hat)
    return float(g)


def expected_distance(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float]) -> float:
    if len(curves) != len(discounts) or len(curves) != ride.degree:
        raise ContractError("curves, discounts and ride degree disagree")
    P = ride_acceptance(curves, discounts)
    return P * ride.shared_distance + (1.0 - P) * ride.total_private_distance


def expected_profitability(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float],
                           cfg: PricingConfig) -> float:
    return expected_revenue(ride, curves, discounts, cfg) / expected_distance(ride, curves, discounts)


def generalized_objective(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float],
                          cfg: PricingConfig, weights: ObjectiveWeights | None = None) -> float:
    """Weighted profitability/revenue/distance/flat-cost score of one ride."""
    weights = weights or cfg.weights_for(ride)
    if ride.is_private and not curves:
        lam = discounts[0] if discounts else cfg.lambda_hat
        gamma, psi = revenue(ride.private_distance[0], lam, cfg), ride.private_distance[0]
        return float(weights.score(gamma, psi, private_ratio(cfg.rho, lam)))
    gamma = expected_revenue(ride, curves, discounts, cfg)
    psi = expected_distance(ride, curves, discounts)
    return float(weights.score(gamma, psi))


def price_private(ride: ShareableRide, cfg: PricingConfig, lam: float | None = None) -> PricedRide:
    """Degree-1 ride, always realised: gamma = rho(1 - lam) d, psi = d, Gamma = rho(1 - lam)."""
    if not ride.is_private:
        raise ContractError(f"ride {ride.ride_id} is shared")
    lam = cfg.lambda_hat if lam is None else lam
    d = ride.private_distance[0]
    return PricedRide.from_values(ride, (lam,), revenue(d, lam, cfg), d, 1.0, cfg.private_weights,
                                  ratio=private_ratio(cfg.rho, lam))


def price_at(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float],
             cfg: PricingConfig) -> PricedRide:
    """Evaluate a ride at a given discount vector."""
    _check(ride, curves, discounts)
    probs = _probs(curves, discounts)
    g, psi, P = _gamma_psi(np.asarray(ride.private_distance), ride.shared_distance, discounts, probs,
                           cfg.rho, cfg.lambda_hat)
    return PricedRide.from_values(ride, discounts, g, psi, P, cfg.weights_for(ride))


# -- search -------------------------------------------------------------------


class _Best:
    """Running argmax with deterministic tie-breaking: higher score, then lower
    total discount, then lexicographically smaller vector."""

    def __init__(self) -> None:
        self.score = -np.inf
        self.vec: tuple[float, ...] | None = None

    def _key(self, vec: Sequence[float]) -> tuple:
        return (sum(vec), tuple(vec))

    def offer(self, score: float, vec: Sequence[float]) -> bool:
        vec = tuple(float(x) for x in vec)
        tol = TIE_TOL * max(1.0, abs(self.score)) if np.isfinite(self.score) else 0.0
        if self.vec is None or score > self.score + tol:
            self.score, self.vec = float(score), vec
            return True
        if score >= self.score - tol and self._key(vec) < self._key(self.vec):
            self.score, self.vec = max(self.score, float(score)), vec
            return True
        return False

    def offer_block(self, scores: np.ndarray, vecs: np.ndarray) -> None:
        """Offer the best rows of a (N,) score array / (N, k) vector array."""
        top = scores.max()
        tol = TIE_TOL * max(1.0, abs(top))
        idx = np.nonzero(scores >= top - tol)[0]
        sub = vecs[idx]
        keys = [sub[:, j] for j in range(sub.shape[1] - 1, -1, -1)] + [sub.sum(axis=1)]
        pick = idx[np.lexsort(keys)[0]]
        self.offer(float(scores[pick]), vecs[pick])


def _outer(parts: list[np.ndarray], op) -> np.ndarray:
    out = parts[0]
    for q in parts[1:]:
        out = op.outer(out, q)
    return out


def _search_product(ride: ShareableRide, cand: list[np.ndarray], probs: list[np.ndarray], cfg: PricingConfig,
                    best: _Best) -> None:
    """Score the full Cartesian product of candidate sets.

    Uses gamma = P * sum_j r_j (lambda_hat - lam_j) + sum_j r_j (1 - lambda_hat p_j),
    r_j = rho d_j, which is the factored form regrouped into a product term
    and two member-separable sums.
    """
    d = np.asarray(ride.private_distance)
    r = cfg.rho * d
    D = float(d.sum())
    w = cfg.weights_for(ride)
    size = int(np.prod([c.size for c in cand]))
    heads = [slice(None)] if size <= MAX_BLOCK else [slice(h, h + 1) for h in range(cand[0].size)]
    for h in heads:
        cs = [cand[0][h]] + cand[1:]
        ps = [probs[0][h]] + probs[1:]
        P = _outer(ps, np.multiply)
        A = _outer([rj * (cfg.lambda_hat - c) for rj, c in zip(r, cs)], np.add)
        B = _outer([rj * (1.0 - cfg.lambda_hat * p) for rj, p in zip(r, ps)], np.add)
        gamma = P * A + B
        psi = D - P * (D - ride.shared_distance)
        scores = np.asarray(w.score(gamma, psi)).ravel()
        top = scores.max()
        tol = TIE_TOL * max(1.0, abs(top))
        flat = np.nonzero(scores >= top - tol)[0]
        idx = np.unravel_index(flat, P.shape)
        vecs = np.stack([c[i] for c, i in zip(cs, idx)], axis=1)
        best.offer_block(scores[flat], vecs)


def _score_vectors(ride: ShareableRide, curves: Sequence[AcceptanceCurve], vecs: np.ndarray,
                   cfg: PricingConfig) -> np.ndarray:
    d = np.asarray(ride.private_distance)
    lams = [vecs[:, j] for j in range(vecs.shape[1])]
    probs = [curves[j](lams[j]) for j in range(vecs.shape[1])]
    g, psi, _ = _gamma_psi(d, ride.shared_distance, lams, probs, cfg.rho, cfg.lambda_hat)
    return np.asarray(cfg.weights_for(ride).score(g, psi), dtype=float)


def optimize_discounts(ride: ShareableRide, curves: Sequence[AcceptanceCurve], cfg: PricingConfig,
                       thinning: int = 20) -> PricedRide:
    """Discount vector maximising the ride objective.

    Exhaustive over the product of (possibly thinned) per-member candidate
    sets. When thinning removes candidates, two extra passes over the full
    sets follow: every flat-equivalent vector (a common discount snapped down
    to each member's nearest candidate) and coordinate-wise improvement from
    the incumbent. Both only ever raise the value.
    """
    if ride.degree < 2:
        raise ContractError("degree-1 rides are priced with price_private")
    if len(curves) != ride.degree:
        raise ContractError(f"ride {ride.ride_id}: {len(curves)} curves for degree {ride.degree}")
    full = [np.array(candidate_discounts(c, cfg.lambda_hat, 0, cfg.lambda_cap)) for c in curves]
    if thinning:
        cand = [np.array(candidate_discounts(c, cfg.lambda_hat, thinning, cfg.lambda_cap)) for c in curves]
    else:
        cand = full
    best = _Best()
    _search_product(ride, cand, [c(x) for c, x in zip(curves, cand)], cfg, best)

    if any(a.size != b.size for a, b in zip(cand, full)):
        levels = np.unique(np.concatenate(full))
        diag = np.stack([f[np.searchsorted(f, levels, side="right") - 1] for f in full], axis=1)
        best.offer_block(_score_vectors(ride, curves, diag, cfg), diag)
        for _ in range(100):
            changed = False
            for j in range(ride.degree):
                vecs = np.tile(np.array(best.vec), (full[j].size, 1))
                vecs[:, j] = full[j]
                before = best.vec
                best.offer_block(_score_vectors(ride, curves, vecs, cfg), vecs)
                changed |= best.vec != before
            if not changed:
                break
    return price_at(ride, curves, best.vec, cfg)


def flat_vector(ride: ShareableRide, value: float, cfg: PricingConfig) -> tuple[float, ...]:
    return (max(value, cfg.lambda_hat),) * ride.degree


# -- oracles --------------------------------------------------------------------


def enumeration_oracle(ride: ShareableRide, curves: Sequence[AcceptanceCurve], discounts: Sequence[float],
                       cfg: PricingConfig) -> tuple[float, float]:
    """(expected revenue, expected distance) by summing all 2^k accept/reject scenarios."""
    _check(ride, curves, discounts)
    k = ride.degree
    if k > 20:
        raise ContractError(f"enumeration refused for degree {k} > 20")
    p = _probs(curves, discounts)
    d = ride.private_distance
    e_rev = e_dist = 0.0
    for choice in itertools.product((0, 1), repeat=k):
        prob = 1.0
        for pj, x in zip(p, choice):
            prob *= pj if x else 1.0 - pj
        if all(choice):
            rev = sum(revenue(d[j], discounts[j], cfg) for j in range(k))
            dist = ride.shared_distance
        else:
            rev = sum(revenue(d[j], cfg.lambda_hat if x else 0.0, cfg) for j, x in enumerate(choice))
            dist = sum(d)
        e_rev += prob * rev
        e_dist += prob * dist
    return e_rev, e_dist


def monte_carlo_oracle(ride: ShareableRide, grid: DiscretizedGrid | Sequence[DiscretizedGrid],
                       discounts: Sequence[float], cfg: PricingConfig, n_draws: int = 100_000,
                       seed: int = 0, return_stderr: bool = False):
    """Simulated (revenue, distance) means from trait draws.

    Each draw samples every member's traits independently (from one shared
    grid, or from one grid per member) and applies the all-or-nothing
    realisation rule. With ``return_stderr`` the standard errors follow.
    """
    k = ride.degree
    if len(discounts) != k:
        raise ContractError("one discount per member required")
    grids = list(grid) if isinstance(grid, (list, tuple)) else [grid] * k
    rng = np.random.default_rng(seed)
    accept = np.empty((n_draws, k), dtype=bool)
    for j, (m, g) in enumerate(zip(ride.members, grids)):
        vot, pfs = g.sample(n_draws, rng)
        thr = thresholds(ride, m, vot, pfs, cfg.rho, cfg.degree_rule)
        accept[:, j] = thr <= discounts[j]
    all_in = accept.all(axis=1)
    d = np.asarray(ride.private_distance)
    r_offer = cfg.rho * (1 - np.asarray(discounts)) * d
    r_hat = cfg.rho * (1 - cfg.lambda_hat) * d
    r_full = cfg.rho * d
    collapsed = np.where(accept, r_hat, r_full).sum(axis=1)
    rev = np.where(all_in, r_offer.sum(), collapsed)
    dist = np.where(all_in, ride.shared_distance, d.sum())
    if return_stderr:
        return (float(rev.mean()), float(dist.mean()),
                float(rev.std(ddof=1) / np.sqrt(n_draws)), float(dist.std(ddof=1) / np.sqrt(n_draws)))
    return float(rev.mean()), float(dist.mean())


# -- export ---------------------------------------------------------------------

PRICED_HEADER = ["ride_id", "degree", "discounts", "gamma", "psi", "Gamma", "O", "accept_prob"]


def write_priced_csv(priced: Iterable[PricedRide], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICED_HEADER)
        for p in sorted(priced, key=lambda x: x.ride_id):
            w.writerow([p.ride_id, p.degree, ";".join(repr(x) for x in p.discounts), repr(p.gamma),
                        repr(p.psi), repr(p.Gamma), repr(p.O), repr(p.accept_prob)])
