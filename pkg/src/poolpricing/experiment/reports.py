"""Plot-ready datasets and the KPI summary for a pipeline run.

Files written to ``out_dir`` (all CSV files use ``\\n`` line endings and a
fixed column order; floats are written with ``repr`` so they re-read exactly):

``kpis.json``
    One object per strategy: average expected profitability, total expected
    distance, degree histogram and related counts.
``discount_hist.csv``
    ``strategy,scope,bin_lo,bin_hi,count``. Per-traveller discounts of shared
    rides in 5% bins; scope ``graph`` counts every shared ride, ``offer``
    only the selected ones.
``degree_hist.csv``
    ``strategy,degree,rides,travellers`` for the selected offer.
``profitability_per_ride.csv``
    ``strategy,ride_id,degree,Gamma,O,psi,accept_prob,selected`` for every
    shared ride of the graph.
``savings_vs_profitability.csv``
    ``strategy,ride_id,degree,distance_saved,Gamma,selected`` where
    distance_saved = 1 - d_s / sum(d_i), the reduction if the ride is realised.
``acceptance_hist.csv``
    ``strategy,scope,bin_lo,bin_hi,count`` of ride acceptance probabilities
    in 5% bins.
``heatmap_bins.csv``
    ``strategy,saved_lo,saved_hi,Gamma_lo,Gamma_hi,rides,mean_accept_prob``;
    shared rides binned by distance saved (5%) and Gamma (0.05), non-empty
    bins only.

Per strategy, ``<slug>/priced.csv`` and ``<slug>/offer.csv`` hold the full
pricing and offer; ``rides.csv`` and ``requests.csv`` hold the shared inputs.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from pathlib import Path
from typing import Sequence

from poolpricing.demand import write_requests
from poolpricing.errors import ConfigError
from poolpricing.experiment.pipeline import PipelineResult, StrategyReport, mixture_summary
from poolpricing.matching import write_offer_csv
from poolpricing.pricing import write_priced_csv
from poolpricing.shareability import write_rides_csv

DISCOUNT_BIN = 0.05
ACCEPT_BIN = 0.05
SAVED_BIN = 0.05
GAMMA_BIN = 0.05
_EDGE_TOL = 1e-9

REPORT_FILES = (
    "kpis.json", "discount_hist.csv", "degree_hist.csv", "profitability_per_ride.csv",
    "savings_vs_profitability.csv", "acceptance_hist.csv", "heatmap_bins.csv",
)


def bin_index(value: float, width: float, n_bins: int | None = None) -> int:
    """Bin of ``value`` for bins [k*width, (k+1)*width); exact edges go up.

    A small tolerance keeps values such as 0.15 in bin 3 despite rounding.
    The top edge folds into the last bin when ``n_bins`` is given.
    """
    k = math.floor(value / width + _EDGE_TOL)
    if n_bins is not None:
        k = min(max(k, 0), n_bins - 1)
    return k


def _edges(k: int, width: float) -> tuple[float, float]:
    return round(k * width, 10), round((k + 1) * width, 10)


def _unit_hist(values, width: float) -> list[int]:
    n = int(round(1.0 / width))
    counts = [0] * n
    for v in values:
        counts[bin_index(v, width, n)] += 1
    return counts


def _writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def kpi_document(result: PipelineResult) -> dict:
    cfg = result.config
    doc = {
        "scenario": {
            "travellers": len(result.graph.travellers),
            "rides_in_graph": len(result.graph.rides),
            "rides_by_degree": {str(k): v for k, v in
                                sorted(Counter(r.degree for r in result.graph.rides).items())},
            "rho": cfg.rho,
            "lambda_hat": cfg.lambda_hat,
            "alpha": cfg.alpha,
            "lambda0": cfg.lambda0,
            "seed": cfg.seed,
            "classes": mixture_summary(cfg.mixture),
        },
        "strategies": {r.name: r.kpis() for r in result.reports},
    }
    return doc


def emit_reports(result: PipelineResult, out_dir: str | Path) -> list[Path]:
    """Write every dataset; returns the paths written, in a fixed order."""
    reports: Sequence[StrategyReport] = result.reports
    if not reports:
        raise ConfigError("no strategies to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    path = out / "kpis.json"
    path.write_text(json.dumps(kpi_document(result), indent=2, sort_keys=False) + "\n")
    written.append(path)

    path = out / "discount_hist.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "scope", "bin_lo", "bin_hi", "count"])
        for rep in reports:
            for scope in ("graph", "offer"):
                for k, c in enumerate(_unit_hist(rep.shared_discounts(scope), DISCOUNT_BIN)):
                    w.writerow([rep.name, scope, *_edges(k, DISCOUNT_BIN), c])
    written.append(path)

    path = out / "degree_hist.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "degree", "rides", "travellers"])
        for rep in reports:
            for deg, n in rep.degree_histogram().items():
                w.writerow([rep.name, deg, n, deg * n])
    written.append(path)

    path = out / "profitability_per_ride.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "ride_id", "degree", "Gamma", "O", "psi", "accept_prob", "selected"])
        for rep in reports:
            for rec in rep.records:
                if rec.degree > 1:
                    w.writerow([rep.name, rec.ride_id, rec.degree, repr(rec.Gamma), repr(rec.O),
                                repr(rec.psi), repr(rec.accept_prob), int(rec.selected)])
    written.append(path)

    path = out / "savings_vs_profitability.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "ride_id", "degree", "distance_saved", "Gamma", "selected"])
        for rep in reports:
            for rec in rep.records:
                if rec.degree > 1:
                    w.writerow([rep.name, rec.ride_id, rec.degree, repr(rec.distance_saved),
                                repr(rec.Gamma), int(rec.selected)])
    written.append(path)

    path = out / "acceptance_hist.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "scope", "bin_lo", "bin_hi", "count"])
        for rep in reports:
            for scope in ("graph", "offer"):
                probs = [r.accept_prob for r in rep.records if r.degree > 1 and (scope == "graph" or r.selected)]
                for k, c in enumerate(_unit_hist(probs, ACCEPT_BIN)):
                    w.writerow([rep.name, scope, *_edges(k, ACCEPT_BIN), c])
    written.append(path)

    path = out / "heatmap_bins.csv"
    fh, w = _writer(path)
    with fh:
        w.writerow(["strategy", "saved_lo", "saved_hi", "Gamma_lo", "Gamma_hi", "rides", "mean_accept_prob"])
        for rep in reports:
            cells: dict[tuple[int, int], list[float]] = defaultdict(list)
            for rec in rep.records:
                if rec.degree > 1:
                    key = (bin_index(rec.distance_saved, SAVED_BIN), bin_index(rec.Gamma, GAMMA_BIN))
                    cells[key].append(rec.accept_prob)
            for (ks, kg), probs in sorted(cells.items()):
                w.writerow([rep.name, *_edges(ks, SAVED_BIN), *_edges(kg, GAMMA_BIN), len(probs),
                            repr(math.fsum(probs) / len(probs))])
    written.append(path)

    write_rides_csv(result.graph, out / "rides.csv")
    write_requests(result.requests, out / "requests.csv")
    written += [out / "rides.csv", out / "requests.csv"]
    for rep in reports:
        sub = out / rep.strategy.slug
        sub.mkdir(exist_ok=True)
        write_priced_csv([rep.priced[k] for k in sorted(rep.priced)], sub / "priced.csv")
        write_offer_csv(rep.offer, result.graph, rep.priced, sub / "offer.csv")
        written += [sub / "priced.csv", sub / "offer.csv"]
    return written


def load_kpis(path: str | Path) -> dict:
    """Per-strategy KPI objects from a ``kpis.json`` file."""
    return json.loads(Path(path).read_text())["strategies"]
