"""Behavioural trait distribution: mixture of classes, quantiles and discretisation.

Traits per traveller are the value of time (currency/hour) and the penalty for
sharing (a multiplier >= 1 on in-vehicle plus pickup-delay time). Within a
class the two traits are independent normals; the population is a finite
mixture of classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from poolpricing.errors import DomainError

Marginal = Literal["vot", "pfs"]


@dataclass(frozen=True)
class BehavioralClass:
    mean_vot: float
    std_vot: float
    mean_pfs: float
    std_pfs: float
    share: float
    name: str = ""

    def __post_init__(self) -> None:
        # std == 0 is accepted as a point mass (degenerate limit).
        if self.std_vot < 0 or self.std_pfs < 0:
            raise DomainError(f"class {self.name!r}: standard deviations must be >= 0")
        if not 0 < self.share <= 1:
            raise DomainError(f"class {self.name!r}: share must lie in (0, 1]")

    def mean(self, which: Marginal) -> float:
        return self.mean_vot if which == "vot" else self.mean_pfs

    def std(self, which: Marginal) -> float:
        return self.std_vot if which == "vot" else self.std_pfs


@dataclass(frozen=True)
class BehavioralMixture:
    """Finite mixture of :class:`BehavioralClass`.

    ``vot_floor`` and ``pfs_floor`` truncate atoms and draws from below: a
    negative value of time is meaningless and a sharing penalty below 1 would
    make pooling intrinsically pleasant.
    """

    classes: tuple[BehavioralClass, ...]
    vot_floor: float = 0.0
    pfs_floor: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "classes", tuple(self.classes))
        if not self.classes:
            raise DomainError("mixture needs at least one class")
        total = sum(c.share for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(f"class shares sum to {total!r}, expected 1")

    def floor(self, which: Marginal) -> float:
        return self.vot_floor if which == "vot" else self.pfs_floor

    def cdf(self, which: Marginal, x: float) -> float:
        """Untruncated mixture cdf of one marginal (right-continuous)."""
        total = 0.0
        for c in self.classes:
            sd = c.std(which)
            if sd == 0:
                total += c.share * (1.0 if x >= c.mean(which) else 0.0)
            else:
                total += c.share * float(ndtr((x - c.mean(which)) / sd))
        return total

    def mean(self, which: Marginal) -> float:
        return sum(c.share * c.mean(which) for c in self.classes)


@dataclass(frozen=True)
class DiscretizedGrid:
    """Finite joint support for (value of time, penalty for sharing).

    ``joint_weights[a, b]`` is the probability of the atom
    ``(vot_points[a], pfs_points[b])``.
    """

    vot_points: np.ndarray
    pfs_points: np.ndarray
    joint_weights: np.ndarray

    def __post_init__(self) -> None:
        vot = np.asarray(self.vot_points, dtype=float)
        pfs = np.asarray(self.pfs_points, dtype=float)
        w = np.asarray(self.joint_weights, dtype=float)
        if w.shape != (vot.size, pfs.size):
            raise DomainError(f"weights shape {w.shape} does not match atoms {(vot.size, pfs.size)}")
        if np.any(np.diff(vot) <= 0) or np.any(np.diff(pfs) <= 0):
            raise DomainError("grid atoms must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise DomainError("grid weights must be non-negative and sum to 1")
        for name, arr in (("vot_points", vot), ("pfs_points", pfs), ("joint_weights", w)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def atoms(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened atoms with positive weight: (vot, pfs, weight)."""
        a, b = np.nonzero(self.joint_weights)
        return self.vot_points[a], self.pfs_points[b], self.joint_weights[a, b]

    def marginal_mean(self, which: Marginal) -> float:
        if which == "vot":
            return float(self.joint_weights.sum(axis=1) @ self.vot_points)
        return float(self.joint_weights.sum(axis=0) @ self.pfs_points)

    def marginal_var(self, which: Marginal) -> float:
        if which == "vot":
            w, x = self.joint_weights.sum(axis=1), self.vot_points
        else:
            w, x = self.joint_weights.sum(axis=0), self.pfs_points
        m = float(w @ x)
        return float(w @ (x - m) ** 2)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``n`` independent (vot, pfs) pairs."""
        vot, pfs, w = self.atoms()
        idx = rng.choice(w.size, size=n, p=w / w.sum())
        return vot[idx], pfs[idx]

    @classmethod
    def point(cls, vot: float, pfs: float) -> "DiscretizedGrid":
        return cls(np.array([vot]), np.array([pfs]), np.ones((1, 1)))

    @classmethod
    def from_atoms(cls, vot: Sequence[float], pfs: Sequence[float], weights: Sequence[float]) -> "DiscretizedGrid":
        """Build a grid from a list of (vot, pfs, weight) atoms; duplicates are merged."""
        vot_pts = np.unique(np.asarray(vot, dtype=float))
        pfs_pts = np.unique(np.asarray(pfs, dtype=float))
        w = np.zeros((vot_pts.size, pfs_pts.size))
        for v, s, p in zip(vot, pfs, weights):
            w[np.searchsorted(vot_pts, v), np.searchsorted(pfs_pts, s)] += p
        return cls(vot_pts, pfs_pts, w / w.sum())


def mixture_quantile(mix: BehavioralMixture, which: Marginal, alpha: float, tol: float = 1e-12) -> float:
    """Return x with mixture-cdf(x) = alpha, clamped at the marginal's floor.

    Bracketing and bisection on the analytic cdf. For atoms (zero-std classes)
    the smallest x with cdf(x) >= alpha is returned.
    """
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha!r}")
    means = [c.mean(which) for c in mix.classes]
    sds = [c.std(which) for c in mix.classes]
    spread = max(max(sds), 1.0)
    lo, hi = min(means) - spread, max(means) + spread
    while mix.cdf(which, lo) > alpha:
        lo -= 2 * (hi - lo)
    while mix.cdf(which, hi) < alpha:
        hi += 2 * (hi - lo)
    # invariant: cdf(lo) <= alpha <= cdf(hi)
    for _ in range(200):
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if mix.cdf(which, mid) >= alpha:
            hi = mid
        else:
            lo = mid
    return max(hi, mix.floor(which))


def _class_points(mean: float, sd: float, n: int) -> np.ndarray:
    q = (np.arange(1, n + 1) - 0.5) / n
    if sd == 0:
        return np.full(n, mean)
    return mean + sd * ndtri(q)


def discretize(mix: BehavioralMixture, n_per_class_vot: int, n_per_class_pfs: int) -> DiscretizedGrid:
    """Equal-probability quantile-midpoint grid, merged across classes.

    Each class contributes ``n_vot * n_pfs`` atoms of mass
    ``share / (n_vot * n_pfs)``; atoms below the floors are lifted to them and
    coincident atoms merge.
    """
    if n_per_class_vot < 1 or n_per_class_pfs < 1:
        raise DomainError("grid counts must be >= 1")
    vots, pfss, ws = [], [], []
    for c in mix.classes:
        v = np.maximum(_class_points(c.mean_vot, c.std_vot, n_per_class_vot), mix.vot_floor)
        s = np.maximum(_class_points(c.mean_pfs, c.std_pfs, n_per_class_pfs), mix.pfs_floor)
        vv, ss = np.meshgrid(v, s, indexing="ij")
        vots.append(vv.ravel())
        pfss.append(ss.ravel())
        ws.append(np.full(vv.size, c.share / vv.size))
    return DiscretizedGrid.from_atoms(np.concatenate(vots), np.concatenate(pfss), np.concatenate(ws))


# -- penalty for sharing with more than one co-traveller -------------------

DegreeRule = Callable[[float, int], float]


@dataclass(frozen=True)
class LinearDegreeRule:
    """beta_s,k = 1 + (beta_s - 1) * (1 + epsilon * (k - 2)).

    The excess penalty grows linearly with each extra co-traveller; a
    traveller indifferent to sharing (beta_s = 1) stays indifferent.
    """

    epsilon: float = 0.1

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")

    def __call__(self, beta_s, k: int):
        return 1.0 + (beta_s - 1.0) * (1.0 + self.epsilon * (k - 2))


DEFAULT_DEGREE_RULE = LinearDegreeRule()


def pfs_for_degree(beta_s, k: int, model: DegreeRule = DEFAULT_DEGREE_RULE):
    """Penalty for sharing a ride of degree ``k`` (works on scalars and arrays)."""
    if k < 2:
        raise DomainError(f"ride degree must be >= 2, got {k}")
    if k == 2:
        return beta_s
    return model(beta_s, k)


# -- presets ----------------------------------------------------------------

NYC_4CLASS = BehavioralMixture(
    classes=(
        BehavioralClass(16.98, 0.318, 1.22, 0.082, 0.29, "LC1"),
        BehavioralClass(14.02, 0.201, 1.135, 0.071, 0.28, "LC2"),
        BehavioralClass(26.25, 5.777, 1.049, 0.06, 0.24, "LC3"),
        BehavioralClass(7.78, 1.0, 1.18, 0.076, 0.19, "LC4"),
    )
)

PRESETS: dict[str, BehavioralMixture] = {"nyc-4class": NYC_4CLASS}


def get_preset(name: str) -> BehavioralMixture:
    try:
        return PRESETS[name]
    except KeyError:
        raise DomainError(f"unknown behavioural preset {name!r}; known: {sorted(PRESETS)}") from None
