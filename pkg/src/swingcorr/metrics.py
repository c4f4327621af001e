"""Evaluation: normalized MSE, nadir detection and nadir-lag tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MetricsError(ValueError):
    pass


def _grid(obj):
    if isinstance(obj, tuple):
        lags, vals = obj
    else:
        lags, vals = obj.lags, obj.samples
    return np.asarray(lags, dtype=float), np.asarray(vals, dtype=float)


def _maxabs(v):
    peak = np.abs(v).max(initial=0.0)
    return v / peak if peak > 0 else v


def normalized_mse(reference, estimate, max_lag: float | None = None,
                   min_overlap: float = 0.9) -> float:
    """``||T - C|| / ||T||`` on max-abs-normalized curves over the reference grid.

    Arguments are response objects (``lags``/``samples``) or ``(lags, values)``
    tuples.  The estimate is linearly interpolated onto the reference grid;
    the first and last grid points are excluded.
    """
    tr, vr = _grid(reference)
    te, ve = _grid(estimate)
    if max_lag is None:
        max_lag = tr[-1]
    lo, hi = max(tr[0], te[0]), min(tr[-1], te[-1], max_lag)
    if hi - lo < min_overlap * max_lag:
        raise MetricsError("reference and estimate grids overlap too little")
    keep = (tr >= lo - 1e-12) & (tr <= hi + 1e-12)
    t = tr[keep]
    T = _maxabs(vr[keep])
    C = _maxabs(np.interp(t, te, ve))
    T, C = T[1:-1], C[1:-1]
    den = np.linalg.norm(T)
    if den == 0:
        raise MetricsError("reference response is identically zero")
    return float(np.linalg.norm(T - C) / den)


def detect_nadir(lags, values, polarity: int | None = None) -> tuple[float, float]:
    """Extremum time/value with 3-point parabolic refinement.

    ``polarity=None`` picks the largest absolute value, ``+1`` the maximum,
    ``-1`` the minimum; ties go to the earliest sample.
    """
    t = np.asarray(lags, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise MetricsError("empty response")
    if polarity is None:
        score = np.abs(v)
    elif polarity in (1, -1):
        score = polarity * v
    else:
        raise MetricsError("polarity must be None, +1 or -1")
    i = int(np.argmax(score))
    if 0 < i < len(v) - 1:
        y0, y1, y2 = v[i - 1], v[i], v[i + 1]
        den = y0 - 2 * y1 + y2
        if den != 0:
            p = 0.5 * (y0 - y2) / den
            if abs(p) <= 1:
                h = t[i + 1] - t[i]
                return float(t[i] + p * h), float(y1 - 0.25 * (y0 - y2) * p)
    return float(t[i]), float(v[i])


@dataclass
class LagRow:
    target: str
    time: float
    value: float
    lag: float
    distance: float | None = None
    speed: float | None = None


@dataclass
class EvaluationReport:
    nmse: list[tuple[str, str, str, float]] = field(default_factory=list)
    nadirs: list[LagRow] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def mean_nmse(self) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for _, _, kind, val in self.nmse:
            out.setdefault(kind, []).append(val)
        return {k: float(np.mean(v)) for k, v in out.items()}


def lag_table(responses, source: str, distances=None, polarity: int | None = 0) -> list[LagRow]:
    """Nadir time per target and its lag behind the source's nadir.

    ``responses`` is a list of ``(target, response)`` pairs where a response
    is an object with ``lags``/``samples`` or a plain nadir time (float).
    ``polarity=0`` uses the sign of the source's largest-magnitude extremum
    for every target; ``None`` uses largest absolute value everywhere.
    """
    resp = dict(responses)
    if source not in resp:
        raise MetricsError(f"missing source response {source!r}")

    def nadir(r, pol):
        if isinstance(r, (int, float)):
            return float(r), float("nan")
        t, v = _grid(r)
        return detect_nadir(t, v, pol)

    src = resp[source]
    pol = polarity
    if polarity == 0:
        if isinstance(src, (int, float)):
            pol = None
        else:
            _, sv = detect_nadir(*_grid(src))
            pol = 1 if sv >= 0 else -1
    t0, _ = nadir(src, pol)
    dist = dict(distances or {})
    rows = []
    for target, r in responses:
        t, val = nadir(r, pol)
        lag = t - t0
        d = dist.get(target)
        speed = d / lag if d is not None and lag > 0 else None
        rows.append(LagRow(target, t, val, lag, d, speed))
    return rows
