"""Aggregation of epoch records into evaluation artifacts.

Produces hit-rate statistics and CDFs, bandwidth-gain multiplier
distributions (achieved over direct baseline), and the per-epoch objective
series. Multiplier statistics come in two flavors: `filtered` restricts to
client records that had at least one candidate server, `all` covers every
record with a live direct path. Clients whose direct path is dead
(baseline 0) have no defined multiplier and are only counted.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from statistics import median
from typing import Iterable, Sequence

from .errors import ValidationError
from .scheduler import AllocationPlan, Assignment
from .sim import ClientEpochRecord, EpochRecord

__all__ = [
    "SummaryReport",
    "gain_multiplier",
    "cdf",
    "summarize",
    "emit_report",
    "load_report",
    "per_client_rows",
    "write_rows_csv",
    "write_rows_json",
    "records_to_dict",
    "records_from_dict",
    "save_records",
    "load_records",
    "PER_CLIENT_COLUMNS",
]

PER_CLIENT_COLUMNS = (
    "policy",
    "epoch",
    "client_id",
    "server_id",
    "b_baseline_mbps",
    "b_achieved_mbps",
    "gain_mbps",
    "gamma",
)


def gain_multiplier(b_achieved: float, b_baseline: float) -> float:
    """Achieved over baseline bandwidth. Undefined for a dead direct path."""
    if not (isinstance(b_baseline, (int, float)) and math.isfinite(b_baseline) and b_baseline > 0):
        raise ValidationError(f"b_baseline must be positive, got {b_baseline!r}")
    if not (isinstance(b_achieved, (int, float)) and math.isfinite(b_achieved) and b_achieved >= 0):
        raise ValidationError(f"b_achieved must be non-negative, got {b_achieved!r}")
    return b_achieved / b_baseline


def cdf(values: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF as (value, cumulative fraction) points.

    One point per distinct value, ascending; the last fraction is exactly 1.
    """
    if not values:
        raise ValidationError("cdf requires at least one value")
    ordered = sorted(values)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, value in enumerate(ordered):
        if i + 1 < n and ordered[i + 1] == value:
            continue
        points.append((value, (i + 1) / n))
    return points


@dataclass(frozen=True)
class SummaryReport:
    """Aggregated outcome of one policy's simulation run."""

    policy: str
    epochs: int
    client_epochs: int
    records_with_candidates: int
    no_candidate_records: int
    dead_direct_records: int
    gamma_mean: float | None
    gamma_median: float | None
    gamma_fraction_one: float | None
    gamma_cdf: tuple[tuple[float, float], ...]
    multiplier_min: float | None
    multiplier_mean: float | None
    multiplier_max: float | None
    multiplier_cdf: tuple[tuple[float, float], ...]
    multiplier_mean_all: float | None
    objective_series: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "gamma_cdf", tuple((float(v), float(f)) for v, f in self.gamma_cdf)
        )
        object.__setattr__(
            self, "multiplier_cdf", tuple((float(v), float(f)) for v, f in self.multiplier_cdf)
        )
        object.__setattr__(self, "objective_series", tuple(self.objective_series))
        for points in (self.gamma_cdf, self.multiplier_cdf):
            for (v0, f0), (v1, f1) in zip(points, points[1:]):
                if not (v1 > v0 and f1 >= f0):
                    raise ValidationError("CDF points must be monotone non-decreasing")
            if points and points[-1][1] != 1.0:
                raise ValidationError("final CDF fraction must be exactly 1")


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def summarize(policy: str, records: Sequence[EpochRecord]) -> SummaryReport:
    """Fold a record stream into one report."""
    client_records: list[ClientEpochRecord] = [
        c for record in records for c in record.clients
    ]
    gammas = [c.gamma for c in client_records if c.gamma is not None]
    with_candidates = [c for c in client_records if c.candidate_count > 0]
    hits = sum(1 for c in client_records if c.chose_best)
    multipliers_filtered = [
        gain_multiplier(c.b_achieved_mbps, c.b_baseline_mbps)
        for c in with_candidates
        if c.b_baseline_mbps > 0
    ]
    multipliers_all = [
        gain_multiplier(c.b_achieved_mbps, c.b_baseline_mbps)
        for c in client_records
        if c.b_baseline_mbps > 0
    ]
    return SummaryReport(
        policy=policy,
        epochs=len(records),
        client_epochs=len(client_records),
        records_with_candidates=len(with_candidates),
        no_candidate_records=len(client_records) - len(with_candidates),
        dead_direct_records=sum(1 for c in client_records if c.b_baseline_mbps == 0),
        gamma_mean=_mean(gammas) if gammas else None,
        gamma_median=median(gammas) if gammas else None,
        gamma_fraction_one=(hits / len(gammas)) if gammas else None,
        gamma_cdf=tuple(cdf(gammas)) if gammas else (),
        multiplier_min=min(multipliers_filtered) if multipliers_filtered else None,
        multiplier_mean=_mean(multipliers_filtered) if multipliers_filtered else None,
        multiplier_max=max(multipliers_filtered) if multipliers_filtered else None,
        multiplier_cdf=tuple(cdf(multipliers_filtered)) if multipliers_filtered else (),
        multiplier_mean_all=_mean(multipliers_all) if multipliers_all else None,
        objective_series=tuple(record.plan.objective_mbps for record in records),
    )


def emit_report(report: SummaryReport, format: str, path) -> None:
    """Write a report as JSON or CSV. Same report, same bytes."""
    if format == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            data = asdict(report)
            for key in sorted(data):
                value = data[key]
                if key in ("gamma_cdf", "multiplier_cdf"):
                    value = ";".join(f"{v!r}:{f!r}" for v, f in value)
                elif key == "objective_series":
                    value = ";".join(repr(v) for v in value)
                elif value is None:
                    value = ""
                writer.writerow([key, value])
    else:
        raise ValidationError(f"unknown report format {format!r}; use 'csv' or 'json'")


def load_report(path) -> SummaryReport:
    """Read back a JSON report; load(emit(r)) == r."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    data["gamma_cdf"] = tuple((v, f) for v, f in data["gamma_cdf"])
    data["multiplier_cdf"] = tuple((v, f) for v, f in data["multiplier_cdf"])
    data["objective_series"] = tuple(data["objective_series"])
    return SummaryReport(**data)


def per_client_rows(policy: str, records: Iterable[EpochRecord]) -> list[dict]:
    """Flat per-client rows in the documented column order."""
    rows = []
    for record in records:
        for c in record.clients:
            rows.append(
                {
                    "policy": policy,
                    "epoch": record.epoch_t,
                    "client_id": c.client_id,
                    "server_id": c.server_id,
                    "b_baseline_mbps": c.b_baseline_mbps,
                    "b_achieved_mbps": c.b_achieved_mbps,
                    "gain_mbps": c.gain_mbps,
                    "gamma": c.gamma,
                }
            )
    return rows


def write_rows_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PER_CLIENT_COLUMNS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("server_id", "gamma"):
                if out[key] is None:
                    out[key] = ""
            writer.writerow(out)


def write_rows_json(rows: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(list(rows), fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- record stream (de)serialization ------------------------------------------


def records_to_dict(policy: str, records: Sequence[EpochRecord]) -> dict:
    return {
        "policy": policy,
        "epochs": [
            {
                "epoch_t": record.epoch_t,
                "objective_mbps": record.plan.objective_mbps,
                "assignments": {
                    client_id: {
                        "server_id": a.server_id,
                        "demand_mbps": a.demand_mbps,
                        "gain_mbps": a.gain_mbps,
                    }
                    for client_id, a in record.plan.assignments.items()
                },
                "clients": [
                    {
                        "client_id": c.client_id,
                        "server_id": c.server_id,
                        "candidate_count": c.candidate_count,
                        "feasible_count": c.feasible_count,
                        "b_baseline_mbps": c.b_baseline_mbps,
                        "b_best_mbps": c.b_best_mbps,
                        "b_achieved_mbps": c.b_achieved_mbps,
                        "gain_mbps": c.gain_mbps,
                        "gamma": c.gamma,
                        "chose_best": c.chose_best,
                    }
                    for c in record.clients
                ],
                "server_load_rates": dict(record.server_load_rates),
                "n_active": record.n_active,
            }
            for record in records
        ],
    }


def records_from_dict(data: dict) -> tuple[str, list[EpochRecord]]:
    records = []
    for raw in data["epochs"]:
        plan = AllocationPlan(
            assignments={
                client_id: Assignment(
                    server_id=a["server_id"],
                    demand_mbps=a["demand_mbps"],
                    gain_mbps=a["gain_mbps"],
                )
                for client_id, a in raw["assignments"].items()
            },
            objective_mbps=raw["objective_mbps"],
        )
        clients = tuple(
            ClientEpochRecord(
                client_id=c["client_id"],
                server_id=c["server_id"],
                candidate_count=c["candidate_count"],
                feasible_count=c["feasible_count"],
                b_baseline_mbps=c["b_baseline_mbps"],
                b_best_mbps=c["b_best_mbps"],
                b_achieved_mbps=c["b_achieved_mbps"],
                gain_mbps=c["gain_mbps"],
                gamma=c["gamma"],
                chose_best=c["chose_best"],
            )
            for c in raw["clients"]
        )
        records.append(
            EpochRecord(
                epoch_t=raw["epoch_t"],
                plan=plan,
                clients=clients,
                server_load_rates=raw["server_load_rates"],
                n_active=raw["n_active"],
            )
        )
    return data["policy"], records


def save_records(policy: str, records: Sequence[EpochRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records_to_dict(policy, records), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_records(path) -> tuple[str, list[EpochRecord]]:
    with open(path, "r", encoding="utf-8") as fh:
        return records_from_dict(json.load(fh))
