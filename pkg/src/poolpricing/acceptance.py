"""Acceptance probability of a shared ride as a step function of the discount.

For a traveller with traits (beta_t, beta_s) the utility gain of sharing at
discount ``lam`` is::

    dU(lam) = lam * rho * d - beta_t * (beta_s_k * (that + tp) - t) / 3600

(beta_t per hour, times in seconds). The traveller accepts iff dU >= 0, i.e.
iff the threshold ``(beta_t * (beta_s_k * (that + tp) - t) / 3600) / (rho * d)``
is at most ``lam``. Over a discrete trait grid this gives a right-continuous
non-decreasing step function whose jump points are the only discounts worth
offering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from poolpricing.errors import ContractError, DomainError
from poolpricing.population import DEFAULT_DEGREE_RULE, DegreeRule, DiscretizedGrid, pfs_for_degree
from poolpricing.shareability import ShareableRide

MERGE_TOL = 1e-12
SATURATION_TOL = 1e-12


@dataclass(frozen=True)
class AcceptanceCurve:
    """P(accept | discount) for one traveller in one ride.

    ``cum_probs[j]`` applies on ``[breakpoints[j], breakpoints[j+1])``;
    ``base_prob`` applies on ``[0, breakpoints[0])``.
    """

    breakpoints: np.ndarray
    cum_probs: np.ndarray
    base_prob: float

    def __post_init__(self) -> None:
        bp = np.asarray(self.breakpoints, dtype=float)
        cp = np.asarray(self.cum_probs, dtype=float)
        if bp.shape != cp.shape:
            raise ContractError("breakpoints and cum_probs differ in length")
        if np.any(np.diff(bp) <= 0):
            raise ContractError("breakpoints must be strictly increasing")
        bp.setflags(write=False)
        cp.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "cum_probs", cp)
        object.__setattr__(self, "base_prob", float(self.base_prob))

    def __call__(self, lam):
        """Acceptance probability at discount(s) ``lam`` (scalar or array, lam >= 0)."""
        lam_arr = np.asarray(lam, dtype=float)
        idx = np.searchsorted(self.breakpoints, lam_arr, side="right")
        table = np.concatenate(([self.base_prob], self.cum_probs))
        out = table[idx]
        return float(out) if out.ndim == 0 else out

    @property
    def saturated_at(self) -> float | None:
        """Smallest discount with acceptance 1, or None if never reached."""
        if self.base_prob >= 1.0 - SATURATION_TOL:
            return 0.0
        hit = np.nonzero(self.cum_probs >= 1.0 - SATURATION_TOL)[0]
        return float(self.breakpoints[hit[0]]) if hit.size else None

    def to_json(self) -> str:
        return json.dumps({
            "base_prob": self.base_prob,
            "breakpoints": self.breakpoints.tolist(),
            "cum_probs": self.cum_probs.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "AcceptanceCurve":
        d = json.loads(text)
        return cls(np.array(d["breakpoints"]), np.array(d["cum_probs"]), d["base_prob"])


def thresholds(ride: ShareableRide, member: str, vot, pfs, rho: float,
               degree_rule: DegreeRule = DEFAULT_DEGREE_RULE) -> np.ndarray:
    """Minimal accepted discount for each trait atom (may be <= 0 or > 1)."""
    i = ride.index_of(member)
    d, t = ride.private_distance[i], ride.private_time[i]
    if d <= 0:
        raise DomainError("private distance must be positive")
    burden = ride.shared_time[i] + ride.pickup_delay[i]
    vot = np.asarray(vot, dtype=float)
    pfs = np.asarray(pfs, dtype=float)
    beta_sk = pfs_for_degree(pfs, ride.degree, degree_rule) if ride.degree >= 2 else pfs
    y = vot * (beta_sk * burden - t) / 3600.0
    return y / (rho * d)


def build_curve(ride: ShareableRide, member: str, grid: DiscretizedGrid, rho: float,
                degree_rule: DegreeRule = DEFAULT_DEGREE_RULE) -> AcceptanceCurve:
    vot, pfs, w = grid.atoms()
    lam = thresholds(ride, member, vot, pfs, rho, degree_rule)
    free = lam <= 0
    base = float(w[free].sum())
    lam, w = lam[~free], w[~free]
    order = np.argsort(lam, kind="stable")
    lam, w = lam[order], w[order]
    if lam.size:
        # merge candidates closer than MERGE_TOL onto the smallest of each run
        new_group = np.concatenate(([True], np.diff(lam) > MERGE_TOL))
        starts = np.nonzero(new_group)[0]
        bps = lam[starts]
        mass = np.add.reduceat(w, starts)
        cum = base + np.cumsum(mass)
    else:
        bps, cum = lam, lam
    total = base + float(w.sum())
    if abs(total - 1.0) <= 1e-9:
        if cum.size:
            cum[-1] = 1.0
        else:
            base = 1.0
    cum = np.minimum(cum, 1.0)
    return AcceptanceCurve(bps, cum, min(base, 1.0))


def build_curves(ride: ShareableRide, grid: DiscretizedGrid, rho: float,
                 degree_rule: DegreeRule = DEFAULT_DEGREE_RULE) -> list[AcceptanceCurve]:
    return [build_curve(ride, m, grid, rho, degree_rule) for m in ride.members]


def ride_acceptance(curves: Sequence[AcceptanceCurve], discounts: Sequence[float]) -> float:
    """Probability that every member accepts (independent decisions)."""
    if len(curves) != len(discounts):
        raise ContractError(f"{len(curves)} curves but {len(discounts)} discounts")
    p = 1.0
    for c, lam in zip(curves, discounts):
        p *= c(lam)
    return p


def candidate_discounts(curve: AcceptanceCurve, lambda_hat: float, thinning: int = 20,
                        lambda_cap: float = 1.0) -> list[float]:
    """Discounts worth offering: ``lambda_hat`` plus breakpoints above it.

    Breakpoints past the first one reaching acceptance 1 are revenue-dominated
    and dropped, as are breakpoints above ``lambda_cap``. With ``thinning >= 2``
    at most ``thinning`` values are returned, chosen at roughly equal
    increments of acceptance probability and keeping the first and last
    breakpoint (only the last when ``thinning = 2``); ``thinning = 0`` keeps
    everything.
    """
    if thinning != 0 and thinning < 2:
        raise DomainError("thinning must be 0 (off) or >= 2")
    bps, cum = curve.breakpoints, curve.cum_probs
    keep = (bps > lambda_hat) & (bps <= lambda_cap)
    if curve(lambda_hat) >= 1.0 - SATURATION_TOL:
        return [float(lambda_hat)]
    bps, cum = bps[keep], cum[keep]
    sat = np.nonzero(cum >= 1.0 - SATURATION_TOL)[0]
    if sat.size:
        bps, cum = bps[: sat[0] + 1], cum[: sat[0] + 1]
    if thinning == 2 and bps.size > 1:
        bps = bps[-1:]
    elif thinning and bps.size + 1 > thinning:
        m = thinning - 1
        p0 = curve(lambda_hat)
        targets = p0 + (cum[-1] - p0) * np.arange(1, m + 1) / m
        picks = np.searchsorted(cum, targets - 1e-15, side="left")
        picks = np.unique(np.concatenate(([0, bps.size - 1], np.clip(picks, 0, bps.size - 1))))
        # dedupe can leave room; the cap keeps the promise of at most ``thinning`` values
        if picks.size > m:
            inner = picks[1:-1]
            sel = np.linspace(0, inner.size - 1, m - 2).round().astype(int) if m > 2 else np.array([], int)
            picks = np.unique(np.concatenate(([picks[0], picks[-1]], inner[sel])))
        bps = bps[picks]
    return [float(lambda_hat)] + [float(b) for b in bps]
