"""Response recovery from ambient records by cross-correlation.

Pipeline per (source, target) pair: reference-angle subtraction, mean
removal and zero-phase bandpass, biased cross-correlation, numerical
differentiation, sign correction, restriction to nonnegative lags and
max-abs normalization.  An optional nadir value fixes the physical scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.signal import fftconvolve

from .modal import KINDS
from .simulate import TimeSeries


class RecoveryError(ValueError):
    pass


@dataclass(frozen=True)
class RecoveryConfig:
    passband: tuple[float, float] = (0.1, 0.7)
    taps: int | None = None  # default 6*ceil(fs/low) + 1
    max_lag: float = 10.0
    diff_order: int | None = None  # None: derived from channel types and kind
    nadir: float | None = None
    reference: str = "coi"  # coi | average | <channel label> | none

    def __post_init__(self):
        lo, hi = self.passband
        if not 0 < lo < hi:
            raise ValueError("passband must satisfy 0 < low < high")
        if not self.max_lag > 0:
            raise ValueError("max_lag must be > 0")
        if self.diff_order not in (None, 0, 1, 2):
            raise ValueError("diff_order must be 0, 1 or 2")
        if self.taps is not None and (self.taps < 3 or self.taps % 2 == 0):
            raise ValueError("taps must be odd and >= 3")

    def check(self, ts: float, n: int | None = None):
        nyq = 0.5 / ts
        if not self.passband[1] < nyq:
            raise ValueError(f"passband upper edge must be below Nyquist ({nyq} Hz)")
        if n is not None and self.max_lag > 0.25 * n * ts:
            raise ValueError("max_lag exceeds a quarter of the record length")

    def num_taps(self, ts: float) -> int:
        if self.taps is not None:
            return self.taps
        return 6 * math.ceil(round(1.0 / (ts * self.passband[0]), 9)) + 1


@dataclass(frozen=True)
class CorrelationSequence:
    lags: np.ndarray
    values: np.ndarray
    source: str
    target: str
    ts: float

    def nonnegative(self) -> "CorrelationSequence":
        keep = self.lags >= -0.5 * self.ts
        return CorrelationSequence(self.lags[keep], self.values[keep], self.source,
                                   self.target, self.ts)

    def at(self, lag_index: int) -> float:
        """Value at integer lag (in samples)."""
        i = int(np.flatnonzero(np.isclose(self.lags, lag_index * self.ts))[0])
        return float(self.values[i])


@dataclass(frozen=True)
class RecoveredResponse:
    kind: str
    source: str
    target: str
    lags: np.ndarray
    samples: np.ndarray
    norm: float
    scale: float | None = None
    physical: np.ndarray | None = field(default=None, repr=False)


# -- pre-processing ---------------------------------------------------------

def _check_aligned(channels):
    ts0, n0 = channels[0].ts, len(channels[0])
    for ch in channels[1:]:
        if not math.isclose(ch.ts, ts0, rel_tol=1e-12) or len(ch) != n0:
            raise RecoveryError(f"channel {ch.label} differs in length or sample period")


def reference_angle(channels, weights=None) -> TimeSeries:
    """Weighted (default: arithmetic) pointwise mean of angle channels."""
    channels = list(channels)
    if not channels:
        raise RecoveryError("need at least one channel")
    _check_aligned(channels)
    X = np.vstack([c.samples for c in channels])
    if weights is None:
        ref = X.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(channels),) or w.sum() <= 0:
            raise RecoveryError("weights must match channels and have positive sum")
        ref = (w / w.sum()) @ X
    c0 = channels[0]
    return TimeSeries("reference", c0.ts, ref, c0.t0)


def bandpass_kernel(ts: float, passband, taps: int) -> np.ndarray:
    """Symmetric Hamming-windowed-sinc bandpass.

    Built as the difference of two unit-DC-gain lowpasses, so the DC gain is
    zero up to rounding.
    """
    fs = 1.0 / ts
    lo, hi = passband
    n = np.arange(taps) - (taps - 1) / 2
    win = np.hamming(taps)

    def lowpass(fc):
        h = np.sinc(2 * fc / fs * n) * win
        return h / h.sum()

    return lowpass(hi) - lowpass(lo)


def detrend_bandpass(ts: TimeSeries, cfg: RecoveryConfig) -> TimeSeries:
    """Mean removal and zero-phase FIR bandpass; trims half a kernel at each end."""
    cfg.check(ts.ts)
    taps = cfg.num_taps(ts.ts)
    if len(ts) <= 3 * taps:
        raise RecoveryError(f"record of {len(ts)} samples too short for a {taps}-tap filter")
    h = bandpass_kernel(ts.ts, cfg.passband, taps)
    x = ts.samples - ts.samples.mean()
    y = fftconvolve(x, h, mode="valid")
    y -= y.mean()
    half = (taps - 1) // 2
    return TimeSeries(ts.label, ts.ts, y, ts.t0 + half * ts.ts)


# -- correlation ------------------------------------------------------------

def xcorr_values(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    """Biased ``C[tau] = (1/M) sum_m x[m] y[m - tau]`` for ``tau = -max_lag..max_lag``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = min(len(x), len(y))
    x, y = x[:m], y[:m]
    max_lag = min(max_lag, m - 1)
    nfft = sfft.next_fast_len(2 * m, real=True)
    r = sfft.irfft(sfft.rfft(x, nfft) * np.conj(sfft.rfft(y, nfft)), nfft)
    pos = r[: max_lag + 1]
    neg = r[nfft - max_lag:] if max_lag else r[:0]
    return np.concatenate([neg, pos]) / m


def cross_correlate(x: TimeSeries, y: TimeSeries, max_lag: float) -> CorrelationSequence:
    """Two-sided biased cross-correlation over ``|tau| <= max_lag`` seconds."""
    if not math.isclose(x.ts, y.ts, rel_tol=1e-12):
        raise RecoveryError("sample periods differ")
    nlag = int(round(max_lag / x.ts))
    vals = xcorr_values(x.samples, y.samples, nlag)
    nlag = (len(vals) - 1) // 2
    lags = np.arange(-nlag, nlag + 1) * x.ts
    return CorrelationSequence(lags, vals, x.label, y.label, x.ts)


def differentiate(seq: CorrelationSequence, order: int) -> CorrelationSequence:
    """Central differences inside, one-sided at the two end points."""
    if order not in (1, 2):
        raise RecoveryError("order must be 1 or 2")
    v = seq.values
    h = seq.ts
    if len(v) < 5:
        raise RecoveryError("need at least 5 samples to differentiate")
    out = np.empty_like(v)
    if order == 1:
        out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        out[0] = (v[1] - v[0]) / h
        out[-1] = (v[-1] - v[-2]) / h
    else:
        out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        out[0] = (v[2] - 2 * v[1] + v[0]) / h**2
        out[-1] = (v[-1] - 2 * v[-2] + v[-3]) / h**2
    return CorrelationSequence(seq.lags, out, seq.source, seq.target, h)


# -- full recovery ----------------------------------------------------------

def channel_quantity(label: str) -> str:
    """``freq`` / ``angle`` / ``flow`` from a channel label like ``gen:2:freq``."""
    q = label.rsplit(":", 1)[-1]
    if q not in ("freq", "angle", "flow"):
        raise RecoveryError(f"cannot infer quantity of channel {label!r}")
    return q


def derivative_plan(source_label: str, target_label: str, kind: str) -> tuple[int, float]:
    """Number of lag derivatives and the sign for a (source, target, kind) triple.

    With angle-type base correlation ``C``: ``C_{w,x} = C'``, ``C_{x,w} = -C'``
    and ``C_{w,w} = -C''``.  Angle-type responses equal ``-C'`` and frequency
    responses ``-C''`` up to the positive factor ``2 gamma / alpha``.
    """
    if kind not in KINDS:
        raise RecoveryError(f"unknown kind {kind!r}")
    sq = channel_quantity(source_label)
    if sq == "flow":
        raise RecoveryError("source must be an angle or frequency channel")
    fs = sq == "freq"
    ft = channel_quantity(target_label) == "freq"
    needed = 2 if kind == "frequency" else 1
    order = needed - int(fs) - int(ft)
    if order < 0:
        raise RecoveryError(f"cannot recover a {kind} response from channel {target_label}")
    if kind != "frequency" and ft:
        raise RecoveryError(f"{kind} response needs an angle-type target channel")
    sign = -1.0 if not ft else 1.0
    return order, sign


def _normalize(v: np.ndarray) -> tuple[np.ndarray, float]:
    peak = float(np.abs(v).max(initial=0.0))
    if peak == 0:
        return v.copy(), 0.0
    return v / peak, peak


def recover_response(source: TimeSeries, target: TimeSeries, kind: str,
                     cfg: RecoveryConfig, source_label: str | None = None,
                     target_label: str | None = None) -> RecoveredResponse:
    """Recover a normalized impulse response from two prepared ambient channels."""
    order, sign = derivative_plan(source.label, target.label, kind)
    if cfg.diff_order is not None:
        order = cfg.diff_order
    n = min(len(source), len(target))
    cfg.check(source.ts, n)
    xs = detrend_bandpass(source, cfg)
    xt = detrend_bandpass(target, cfg)
    # two extra lags so tau = 0 and tau = max_lag get central differences
    seq = cross_correlate(xs, xt, cfg.max_lag + 2 * source.ts)
    if not np.any(seq.values):
        raise RecoveryError("no excitation: correlation is identically zero")
    if order:
        seq = differentiate(seq, order)
    nlag = int(round(cfg.max_lag / source.ts))
    centre = (len(seq.values) - 1) // 2
    vals = sign * seq.values[centre: centre + nlag + 1]
    lags = np.arange(nlag + 1) * source.ts
    norm_vals, peak = _normalize(vals)
    if peak == 0:
        raise RecoveryError("no excitation: recovered response is identically zero")
    resp = RecoveredResponse(kind, source_label or source.label,
                             target_label or target.label, lags, norm_vals, peak)
    if cfg.nadir is not None:
        resp = scale_to_nadir(resp, cfg.nadir)
    return resp


def scale_to_nadir(resp: RecoveredResponse, nadir_value: float) -> RecoveredResponse:
    """Attach a physical scale so the extremum of matching sign equals ``nadir_value``."""
    if nadir_value == 0:
        raise RecoveryError("nadir value must be nonzero")
    s = resp.samples
    ext = float(s.min()) if nadir_value < 0 else float(s.max())
    if ext == 0 or np.sign(ext) != np.sign(nadir_value):
        raise RecoveryError("response has no extremum with the sign of the nadir value")
    scale = nadir_value / ext
    return RecoveredResponse(resp.kind, resp.source, resp.target, resp.lags, resp.samples,
                             resp.norm, scale, s * scale)
