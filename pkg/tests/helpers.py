"""Builders shared by the test modules."""

import numpy as np

from poolpricing.acceptance import AcceptanceCurve
from poolpricing.demand import TripRequest
from poolpricing.shareability import ShareableRide


def make_ride(d, d_s, that=None, tp=None, t=None, ride_id=0, members=None):
    """Shared ride with hand-set metrics; times default to 30 km/h private times."""
    k = len(d)
    members = tuple(members or (str(i) for i in range(k)))
    t = tuple(t if t is not None else (x / 30.0 * 3600.0 for x in d))
    that = tuple(that if that is not None else t)
    tp = tuple(tp if tp is not None else (0.0,) * k)
    seq = tuple((m, "o") for m in members) + tuple((m, "d") for m in members)
    return ShareableRide(ride_id, members, seq, float(d_s), tuple(map(float, that)), tuple(map(float, tp)),
                         tuple(map(float, d)), tuple(map(float, t)))


def private_ride(d, ride_id=0, member="0"):
    t = d / 30.0 * 3600.0
    return ShareableRide(ride_id, (member,), ((member, "o"), (member, "d")), d, (t,), (0.0,), (d,), (t,))


def step_curve(points, base=0.0):
    """Acceptance curve from [(breakpoint, cumulative probability), ...]."""
    bps = [b for b, _ in points]
    cps = [c for _, c in points]
    return AcceptanceCurve(np.array(bps, dtype=float), np.array(cps, dtype=float), base)


def random_curve(rng, n_breaks=None, saturate=None):
    n = int(rng.integers(0, 12)) if n_breaks is None else n_breaks
    bps = np.sort(rng.uniform(0.0, 1.2, n))
    bps = np.unique(bps)
    base = float(rng.uniform(0, 0.3)) if rng.random() < 0.5 else 0.0
    inc = rng.dirichlet(np.ones(bps.size + 1))[:-1] * (1 - base) if bps.size else np.array([])
    cum = base + np.cumsum(inc)
    if bps.size and (saturate if saturate is not None else rng.random() < 0.5):
        cum[-1] = 1.0
    return AcceptanceCurve(bps, np.minimum(cum, 1.0), base)


def random_ride(rng, k, ride_id=0):
    d = rng.uniform(1.0, 8.0, k)
    d_s = float(rng.uniform(0.5, 1.2) * d.sum())
    t = d / 30.0 * 3600.0
    that = t * rng.uniform(1.0, 1.8, k)
    tp = rng.uniform(0.0, 300.0, k)
    return make_ride(d, d_s, that, tp, t, ride_id=ride_id)


def random_requests(rng, n, area=3.0, window=600.0):
    out = []
    for i in range(n):
        while True:
            o, d = rng.uniform(0, area, 2), rng.uniform(0, area, 2)
            if np.hypot(*(o - d)) > 0.5:
                break
        out.append(TripRequest(str(i), tuple(map(float, o)), tuple(map(float, d)), float(rng.uniform(0, window))))
    return out


def corridor_requests(rng, n, spread=1.0, length=4.0, window=300.0):
    """Origins clustered near (0, 0), destinations near (length, 0): dense pooling."""
    out = []
    for i in range(n):
        o = rng.uniform(-spread / 2, spread / 2, 2)
        d = rng.uniform(-spread / 2, spread / 2, 2) + np.array([length, 0.0])
        out.append(TripRequest(str(i), tuple(map(float, o)), tuple(map(float, d)), float(rng.uniform(0, window))))
    return out
