"""3D-ROC analysis and the eight AUC summaries derived from it."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .hsi_data import check_mask

DEFAULT_THRESHOLDS = 5001


@dataclass(frozen=True)
class RocCurve:
    """Detection and false-alarm probability as functions of the threshold.

    ``taus`` is sorted ascending in [0, 1] and includes both ends; a pixel is
    flagged when ``score >= tau``. The implicit end point above tau = 1 has
    ``pd = pf = 0``.
    """

    taus: np.ndarray
    pd: np.ndarray
    pf: np.ndarray

    def df_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct (pf, pd) operating points in ascending order, starting at (0, 0)."""
        pf = np.concatenate(([0.0], self.pf[::-1]))
        pd = np.concatenate(([0.0], self.pd[::-1]))
        keep = np.ones(pf.size, dtype=bool)
        keep[1:] = (np.diff(pf) != 0) | (np.diff(pd) != 0)
        return pf[keep], pd[keep]


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    dx = np.diff(x)
    return float(np.sum(dx * (y[1:] + y[:-1]) * 0.5))


def roc_3d(scores, mask, n_thresholds: int = DEFAULT_THRESHOLDS) -> RocCurve:
    """Sweep thresholds over [0, 1].

    The threshold set is ``n_thresholds`` uniform points plus every distinct
    score value, so every operating point of the detector appears on the curve.
    Scores must already be scaled to [0, 1].
    """
    s = np.asarray(scores, dtype=np.float64)
    m = check_mask(mask)
    if s.shape != m.shape:
        raise ValueError(f"score map {s.shape} and mask {m.shape} differ in shape")
    if int(n_thresholds) != n_thresholds or n_thresholds < 2:
        raise ValueError("n_thresholds must be an integer >= 2")
    if not np.all(np.isfinite(s)) or s.min() < 0 or s.max() > 1:
        raise ValueError("scores must be finite and scaled to [0, 1]")

    taus = np.union1d(np.linspace(0.0, 1.0, int(n_thresholds)), np.unique(s))
    anom = np.sort(s[m])
    back = np.sort(s[~m])
    pd = (anom.size - np.searchsorted(anom, taus, side="left")) / anom.size
    pf = (back.size - np.searchsorted(back, taus, side="left")) / back.size
    return RocCurve(taus, pd, pf)


@dataclass(frozen=True)
class AucReport:
    auc_df: float
    auc_dtau: float
    auc_ftau: float
    auc_td: float
    auc_bs: float
    auc_snpr: float
    auc_td_bs: float
    auc_odp: float

    LABELS = ("AUC(D,F)", "AUC(D,tau)", "AUC(F,tau)", "AUC_TD", "AUC_BS",
              "AUC_SNPR", "AUC_TD-BS", "AUC_ODP")

    @classmethod
    def from_base(cls, auc_df: float, auc_dtau: float, auc_ftau: float) -> "AucReport":
        snpr = auc_dtau / auc_ftau if auc_ftau != 0 else math.inf
        return cls(
            auc_df=auc_df,
            auc_dtau=auc_dtau,
            auc_ftau=auc_ftau,
            auc_td=auc_df + auc_dtau,
            auc_bs=auc_df - auc_ftau,
            auc_snpr=snpr,
            auc_td_bs=auc_dtau - auc_ftau,
            auc_odp=auc_df + auc_dtau - auc_ftau,
        )

    def values(self) -> tuple[float, ...]:
        return astuple(self)

    @staticmethod
    def csv_header() -> str:
        return ",".join(f.name for f in fields(AucReport))

    def csv_row(self) -> str:
        return ",".join(repr(float(v)) for v in self.values())


def auc_report(curve: RocCurve) -> AucReport:
    pf, pd = curve.df_points()
    return AucReport.from_base(
        _trapezoid(pd, pf),
        _trapezoid(curve.pd, curve.taus),
        _trapezoid(curve.pf, curve.taus),
    )


def evaluate(scores, mask, n_thresholds: int = DEFAULT_THRESHOLDS) -> AucReport:
    return auc_report(roc_3d(scores, mask, n_thresholds))


def format_table(rows: dict[str, AucReport], digits: int = 4) -> str:
    """Aligned text table, one method per row, columns in AucReport order."""
    head = ["Method", *AucReport.LABELS]
    body = [[name, *(f"{v:.{digits}f}" for v in rep.values())] for name, rep in rows.items()]
    widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                              for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(head), *(fmt(r) for r in body)]) + "\n"


def support_f1(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool).ravel()
    truth = np.asarray(truth, dtype=bool).ravel()
    tp = np.sum(pred & truth)
    if tp == 0:
        return 0.0
    precision = tp / pred.sum()
    recall = tp / truth.sum()
    return float(2 * precision * recall / (precision + recall))
