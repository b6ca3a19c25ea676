"""Reconstruction quality metrics and batch evaluation reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DatasetRecord, ForwardModel, MeasurementVec, SignalVec
from .errors import DomainError, ShapeMismatchError

__all__ = [
    "psnr",
    "fidelity",
    "MetricsReport",
    "evaluate",
    "write_report",
]


def _as_array(x) -> np.ndarray:
    if isinstance(x, (SignalVec, MeasurementVec)):
        return x.data
    return np.asarray(x, dtype=np.float64)


def psnr(
    estimate,
    reference,
    formula: str = "peak",
    cap_db: float | None = 99.0,
) -> float:
    """Peak signal-to-noise ratio of ``estimate`` against ``reference`` in dB.

    ``formula="peak"`` uses ``10*log10(peak / mse)`` with the *un-squared*
    peak of the reference; ``"standard"`` uses the conventional
    ``10*log10(peak**2 / mse)``.  A perfect match is clipped to ``cap_db``
    (pass ``cap_db=None`` for a raw ``inf``).
    """
    est = _as_array(estimate)
    ref = _as_array(reference)
    if est.shape != ref.shape:
        raise ShapeMismatchError(
            f"psnr operands differ in shape: {est.shape} vs {ref.shape}"
        )
    if formula not in ("peak", "standard"):
        raise DomainError(f"unknown psnr formula {formula!r}")
    peak = float(ref.max())
    if peak <= 0:
        raise DomainError("psnr reference must have a positive peak")
    mse = float(np.mean((est - ref) ** 2))
    if mse == 0.0:
        return float("inf") if cap_db is None else float(cap_db)
    numerator = peak if formula == "peak" else peak * peak
    value = 10.0 * np.log10(numerator / mse)
    if cap_db is not None:
        value = min(value, float(cap_db))
    return float(value)


def fidelity(
    f_hat,
    g,
    fm: ForwardModel,
    formula: str = "peak",
    cap_db: float | None = 99.0,
) -> float:
    """Measurement-space PSNR: how well the re-measured estimate explains ``g``."""
    if not isinstance(f_hat, SignalVec):
        f_hat = SignalVec(fm.system_id, np.asarray(f_hat, dtype=np.float64))
    predicted = fm.apply(f_hat)
    return psnr(predicted, g, formula=formula, cap_db=cap_db)


@dataclass
class MetricsReport:
    """Per-record and aggregate reconstruction metrics for one method."""

    method: str
    psnr_db: list[float] = field(default_factory=list)
    fidelity_db: list[float] = field(default_factory=list)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr_db)) if self.psnr_db else float("nan")

    @property
    def mean_fidelity(self) -> float:
        return float(np.mean(self.fidelity_db)) if self.fidelity_db else float("nan")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "count": len(self.psnr_db),
            "mean_psnr_db": self.mean_psnr,
            "mean_fidelity_db": self.mean_fidelity,
            "psnr_db": self.psnr_db,
            "fidelity_db": self.fidelity_db,
        }


def evaluate(
    retriever,
    records: list[DatasetRecord],
    fm: ForwardModel,
    method: str,
    formula: str = "peak",
) -> MetricsReport:
    """Run ``retriever(g) -> SignalVec`` over a test set and collect metrics."""
    report = MetricsReport(method=method)
    for rec in records:
        f_hat = retriever(rec.g)
        report.psnr_db.append(psnr(f_hat, rec.f, formula=formula))
        report.fidelity_db.append(fidelity(f_hat, rec.g, fm, formula=formula))
    return report


def write_report(reports: list[MetricsReport], out_dir) -> tuple[Path, Path]:
    """Write ``report.csv`` (per record) and ``report.json`` (aggregates)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "record", "psnr_db", "fidelity_db"])
        for rep in reports:
            for i, (p, fd) in enumerate(zip(rep.psnr_db, rep.fidelity_db)):
                writer.writerow([rep.method, i, f"{p:.17g}", f"{fd:.17g}"])
    json_path = out / "report.json"
    json_path.write_text(
        json.dumps([rep.to_dict() for rep in reports], indent=2, sort_keys=True)
    )
    return csv_path, json_path
