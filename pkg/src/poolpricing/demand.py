"""Trip requests and travel-time providers."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from poolpricing.errors import DataError, DomainError

REQUEST_HEADER = ["id", "origin_x", "origin_y", "dest_x", "dest_y", "request_time_s"]

Coord = tuple[float, float]
Mode = Literal["euclidean", "manhattan", "haversine", "matrix"]

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class TripRequest:
    id: str
    origin: Coord
    destination: Coord
    request_time: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "destination", (float(self.destination[0]), float(self.destination[1])))
        if not all(math.isfinite(v) for v in (*self.origin, *self.destination, self.request_time)):
            raise DomainError(f"request {self.id}: non-finite coordinate or time")
        if self.origin == self.destination:
            raise DomainError(f"request {self.id}: origin equals destination")
        if self.request_time < 0:
            raise DomainError(f"request {self.id}: negative request time")


@dataclass(frozen=True)
class TravelTimeProvider:
    """Deterministic distance/time oracle.

    Metric modes treat coordinates as planar km (``euclidean``, ``manhattan``)
    or (lon, lat) degrees (``haversine``); time is distance over ``speed_kmh``.
    In ``matrix`` mode the x coordinate of a point is a node id looked up in
    ``matrix`` (seconds), and distance is time times speed.
    """

    mode: Mode = "euclidean"
    speed_kmh: float = 30.0
    nodes: tuple[str, ...] = ()
    matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.speed_kmh <= 0:
            raise DomainError("speed must be positive")
        if self.mode not in ("euclidean", "manhattan", "haversine", "matrix"):
            raise DomainError(f"unknown provider mode {self.mode!r}")
        if self.mode == "matrix":
            if self.matrix is None:
                raise DomainError("matrix mode needs a matrix")
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (len(self.nodes), len(self.nodes)):
                raise DomainError("matrix must be square and match the node list")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)
            object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.nodes)})

    def _node(self, p: Coord) -> int:
        key = _node_key(p[0])
        try:
            return self._index[key]  # type: ignore[attr-defined]
        except KeyError:
            raise LookupError(f"node {key!r} not covered by the travel-time matrix") from None

    def distance_km(self, a: Coord, b: Coord) -> float:
        if self.mode == "matrix":
            return self.time_s(a, b) * self.speed_kmh / 3600.0
        return float(self.pairwise_km(np.array([a]), np.array([b]))[0, 0])

    def time_s(self, a: Coord, b: Coord) -> float:
        if self.mode == "matrix":
            v = float(self.matrix[self._node(a), self._node(b)])
            if not math.isfinite(v):
                raise LookupError(f"no matrix entry for {a} -> {b}")
            return v
        return self.distance_km(a, b) / self.speed_kmh * 3600.0

    def pairwise_km(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Distance matrix between point sets ``a`` (n x 2) and ``b`` (m x 2)."""
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if self.mode == "matrix":
            return self.pairwise_s(a, b) * self.speed_kmh / 3600.0
        dx = a[:, None, 0] - b[None, :, 0]
        dy = a[:, None, 1] - b[None, :, 1]
        if self.mode == "euclidean":
            return np.hypot(dx, dy)
        if self.mode == "manhattan":
            return np.abs(dx) + np.abs(dy)
        lon1, lat1 = np.radians(a[:, None, 0]), np.radians(a[:, None, 1])
        lon2, lat2 = np.radians(b[None, :, 0]), np.radians(b[None, :, 1])
        h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
        return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))

    def pairwise_s(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float).reshape(-1, 2)
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        if self.mode != "matrix":
            return self.pairwise_km(a, b) / self.speed_kmh * 3600.0
        ia = [self._node(tuple(p)) for p in a]
        ib = [self._node(tuple(p)) for p in b]
        out = self.matrix[np.ix_(ia, ib)]
        if not np.all(np.isfinite(out)):
            raise LookupError("travel-time matrix has missing entries for the requested nodes")
        return np.array(out)

    @property
    def is_metric(self) -> bool:
        return self.mode != "matrix"


def _node_key(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def private_metrics(req: TripRequest, provider: TravelTimeProvider) -> tuple[float, float]:
    """Direct-trip distance (km) and time (s)."""
    d = provider.distance_km(req.origin, req.destination)
    t = provider.time_s(req.origin, req.destination)
    if d <= 0:
        raise DomainError(f"request {req.id}: zero-length trip under provider {provider.mode}")
    return d, t


def load_matrix_provider(path: str | Path, speed_kmh: float = 30.0) -> TravelTimeProvider:
    """Read a square CSV of seconds; node ids in the header row and first column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty matrix file")
    nodes = tuple(c.strip() for c in rows[0][1:])
    body = rows[1:]
    if len(body) != len(nodes):
        raise DataError(f"{path}: expected {len(nodes)} rows, found {len(body)}")
    m = np.full((len(nodes), len(nodes)), np.nan)
    for i, row in enumerate(body, start=2):
        if row[0].strip() != nodes[i - 2]:
            raise DataError(f"{path}: row {i} label {row[0]!r} does not match header order")
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell:
                try:
                    m[i - 2, j] = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {i}: bad value {cell!r}") from None
    return TravelTimeProvider(mode="matrix", speed_kmh=speed_kmh, nodes=nodes, matrix=m)


def load_requests(path: str | Path) -> list[TripRequest]:
    """Read the request CSV; row order is preserved."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != REQUEST_HEADER:
            raise DataError(f"{path}: header must be {','.join(REQUEST_HEADER)}")
        out: list[TripRequest] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(REQUEST_HEADER):
                raise DataError(f"{path}: row {lineno}: expected {len(REQUEST_HEADER)} fields, got {len(row)}")
            rid = row[0].strip()
            if rid in seen:
                raise DataError(f"{path}: row {lineno}: duplicate id {rid!r}")
            try:
                ox, oy, dx, dy, t = (float(v) for v in row[1:])
                req = TripRequest(rid, (ox, oy), (dx, dy), t)
            except (ValueError, DomainError) as exc:
                raise DataError(f"{path}: row {lineno}: {exc}") from None
            seen.add(rid)
            out.append(req)
    return out


def write_requests(requests: Iterable[TripRequest], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUEST_HEADER)
        for r in requests:
            w.writerow([r.id, repr(r.origin[0]), repr(r.origin[1]), repr(r.destination[0]),
                        repr(r.destination[1]), repr(r.request_time)])


def check_unique_ids(requests: Sequence[TripRequest]) -> None:
    seen: set[str] = set()
    for r in requests:
        if r.id in seen:
            raise DataError(f"duplicate request id {r.id!r}")
        seen.add(r.id)
