"""Exact discrete-time simulation of the linearized swing dynamics.

Impulse responses are state trajectories from ``x0 = B e_k``; ambient records
come from ``x[k+1] = Ad x[k] + w[k]`` with ``w ~ N(0, Qd)`` where ``Ad`` and
``Qd`` are the exact ZOH transition matrix and process-noise integral.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .grid import GridModel

_CHANNEL_RE = re.compile(r"^(gen|bus|line):([^:]+):(freq|angle|flow)$")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TimeSeries:
    label: str
    ts: float
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError("sample period must be > 0")
        s = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValueError(f"{self.label}: non-finite samples")
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.ts * np.arange(len(self.samples))

    def replace(self, **kw) -> "TimeSeries":
        d = dict(label=self.label, ts=self.ts, samples=self.samples, t0=self.t0)
        d.update(kw)
        return TimeSeries(**d)


@dataclass(frozen=True)
class StateSpace:
    """``x = [delta, omega]``; ``A = [[0, I], [-M^-1 K, -M^-1 D]]``, ``B = [[0], [M^-1]]``."""

    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    A: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)
    model: GridModel | None = field(default=None, repr=False)

    def __post_init__(self):
        M, D, K = (np.atleast_2d(np.asarray(x, dtype=float)) for x in (self.M, self.D, self.K))
        n = M.shape[0]
        Mi = np.diag(1.0 / np.diag(M))
        A = np.block([[np.zeros((n, n)), np.eye(n)], [-Mi @ K, -Mi @ D]])
        B = np.vstack([np.zeros((n, n)), Mi])
        for name, val in (("M", M), ("D", D), ("K", K), ("A", A), ("B", B)):
            object.__setattr__(self, name, val)
        ev = np.linalg.eigvals(A)
        scale = max(1.0, np.abs(ev).max())
        nonzero = ev[np.abs(ev) > 1e-8 * scale]
        # undamped (D = 0) models may oscillate forever; damped ones must decay
        limit = 0.0 if np.any(np.diag(D) > 0) else 1e-9 * scale
        if np.any(nonzero.real >= limit):
            raise SimulationError("state matrix has non-decaying nonzero modes")

    @classmethod
    def from_model(cls, model: GridModel) -> "StateSpace":
        return cls(model.M, model.D, model.K, model=model)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def output_row(self, channel: str) -> np.ndarray:
        """Row ``c`` with ``y = c @ x`` for a channel name like ``gen:2:freq``."""
        n = self.n
        m = _CHANNEL_RE.match(channel)
        if m is None:
            raise KeyError(f"bad channel name {channel!r}")
        kind, ident, qty = m.groups()
        row = np.zeros(2 * n)
        if kind == "gen" and qty in ("freq", "angle"):
            try:
                idx = self._gen_index(ident)
            except KeyError as exc:
                raise KeyError(f"channel {channel!r}: {exc.args[0]}") from None
            row[idx + (n if qty == "freq" else 0)] = 1.0
            return row
        if self.model is None:
            raise KeyError(f"channel {channel!r} needs a grid model")
        if kind == "bus" and qty == "angle":
            row[:n] = self.model.bus_angle_row(int(ident))
            return row
        if kind == "line" and qty == "flow":
            row[:n] = self.model.flow_row(ident)
            return row
        raise KeyError(f"bad channel name {channel!r}")

    def _gen_index(self, ident: str) -> int:
        if self.model is not None:
            try:
                return self.model.generator_ids.index(int(ident))
            except ValueError:
                raise KeyError(f"unknown generator {ident}") from None
        k = int(ident) - 1
        if not 0 <= k < self.n:
            raise KeyError(f"unknown generator {ident}")
        return k

    def coi_projector(self) -> np.ndarray:
        """State map removing the inertia-weighted center-of-inertia angle and speed."""
        n = self.n
        m = np.diag(self.M)
        P = np.eye(n) - np.outer(np.ones(n), m / m.sum())
        return np.block([[P, np.zeros((n, n))], [np.zeros((n, n)), P]])

    def damping_time_constant(self) -> float:
        """Slowest decay time of the nonzero modes of ``A`` (inf if undamped)."""
        ev = np.linalg.eigvals(self.A)
        scale = max(1.0, np.abs(ev).max())
        rates = -ev[np.abs(ev) > 1e-8 * scale].real
        rates = rates[rates > 0]
        return float(1.0 / rates.min()) if rates.size else float("inf")

    def slowest_period(self) -> float:
        ev = np.linalg.eigvals(self.A)
        im = np.abs(ev.imag)
        im = im[im > 1e-9]
        return float(2 * np.pi / im.min()) if im.size else 0.0


def discretize(A, B, ts: float, noise_cov) -> tuple[np.ndarray, np.ndarray]:
    """Exact ZOH transition ``Ad`` and process-noise covariance ``Qd`` (Van Loan)."""
    if not ts > 0:
        raise ValueError("sample period must be > 0")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    S = np.atleast_2d(np.asarray(noise_cov, dtype=float))
    n = A.shape[0]
    G = B @ S @ B.T
    blk = np.zeros((2 * n, 2 * n))
    blk[:n, :n] = -A
    blk[:n, n:] = G
    blk[n:, n:] = A.T
    E = expm(blk * ts)
    if not np.all(np.isfinite(E)):
        raise SimulationError("matrix exponential did not converge")
    Ad = E[n:, n:].T
    Qd = Ad @ E[:n, n:]
    Qd = 0.5 * (Qd + Qd.T)
    w, U = np.linalg.eigh(Qd)
    if w.min(initial=0.0) < -1e-12 * max(1.0, np.abs(w).max(initial=0.0)):
        raise SimulationError("process-noise covariance is not PSD")
    if np.any(w < 0):
        Qd = (U * np.clip(w, 0.0, None)) @ U.T
    return Ad, Qd


def noise_factor(Q: np.ndarray) -> np.ndarray:
    """Square-root factor ``L`` with ``L L^T = Q`` (Cholesky, eigen fallback when singular)."""
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        w, U = np.linalg.eigh(Q)
        if w.min() < -1e-12 * max(1.0, w.max()):
            raise SimulationError("cannot factor process-noise covariance") from None
        return U * np.sqrt(np.clip(w, 0.0, None))


def _as_ss(model) -> StateSpace:
    return model if isinstance(model, StateSpace) else StateSpace.from_model(model)


def simulate_impulse(model, k: int, channels, ts: float, horizon: float,
                     relative_to_coi: bool = True) -> list[TimeSeries]:
    """Sampled response to a unit impulse at generator index ``k``.

    With ``relative_to_coi`` the center-of-inertia motion (the zero mode under
    uniform damping) is removed from angle and speed outputs.
    """
    ss = _as_ss(model)
    rows = np.array([ss.output_row(ch) for ch in channels])
    if relative_to_coi:
        rows = rows @ ss.coi_projector()
    nsteps = int(round(horizon / ts)) + 1
    Ad = expm(ss.A * ts)
    x = ss.B[:, k].copy()
    X = np.empty((nsteps, x.size))
    for i in range(nsteps):
        X[i] = x
        x = Ad @ x
    Y = X @ rows.T
    return [TimeSeries(ch, ts, Y[:, j].copy()) for j, ch in enumerate(channels)]


@dataclass(frozen=True)
class AmbientConfig:
    alpha: float = 1.0
    duration: float = 600.0
    ts: float = 0.01
    seed: int = 0
    target: str = "generator-inputs"
    burn_in: float | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.ts > 0 or not self.duration > 0:
            raise ValueError("duration and sample period must be > 0")
        if self.target not in ("generator-inputs", "loads"):
            raise ValueError(f"unknown perturbation target {self.target!r}")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn-in must be >= 0")


def input_covariance(ss: StateSpace, cfg: AmbientConfig) -> np.ndarray:
    """Covariance of the white input in generator coordinates."""
    if cfg.target == "generator-inputs":
        return cfg.alpha * ss.M
    if ss.model is None or not ss.model.load_ids:
        raise SimulationError("load perturbation needs a grid model with load buses")
    Pl = ss.model.load_injection_map()
    return cfg.alpha * Pl @ Pl.T


def _burn_in(ss: StateSpace, cfg: AmbientConfig) -> float:
    ratios = np.diag(ss.D) / np.diag(ss.M)
    gmin = ratios.min()
    required = 5.0 / (gmin / 2) if gmin > 0 else float("inf")
    if cfg.burn_in is None:
        return max(required, 5.0 * ss.damping_time_constant())
    if cfg.burn_in < required * (1 - 1e-12):
        raise ValueError(f"burn-in {cfg.burn_in} s shorter than required {required:.3g} s")
    return cfg.burn_in


def simulate_ambient(model, cfg: AmbientConfig, channels) -> list[TimeSeries]:
    """Ambient record driven by white noise; deterministic in ``cfg.seed``.

    RNG: numpy PCG64 seeded from ``SeedSequence(seed)``; child stream 0 drives
    the process noise (measurement noise uses its own seeds, see
    :func:`add_measurement_noise`).
    """
    ss = _as_ss(model)
    slowest = ss.slowest_period()
    if cfg.duration < 10 * slowest:
        raise ValueError(f"duration must be >= 10x slowest mode period ({10 * slowest:.3g} s)")
    burn = _burn_in(ss, cfg)
    rows = np.array([ss.output_row(ch) for ch in channels])
    Sigma = input_covariance(ss, cfg)
    Ad, Qd = discretize(ss.A, ss.B, cfg.ts, Sigma)
    Lq = noise_factor(Qd)
    nburn = int(np.ceil(burn / cfg.ts))
    nkeep = int(round(cfg.duration / cfg.ts))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed).spawn(1)[0]))
    W = rng.standard_normal((nburn + nkeep, Ad.shape[0])) @ Lq.T
    x = np.zeros(Ad.shape[0])
    for i in range(nburn):
        x = Ad @ x + W[i]
    X = np.empty((nkeep, x.size))
    for i in range(nkeep):
        x = Ad @ x + W[nburn + i]
        X[i] = x
    Y = X @ rows.T
    return [TimeSeries(ch, cfg.ts, Y[:, j].copy()) for j, ch in enumerate(channels)]


def add_measurement_noise(ts: TimeSeries, relative_level: float, seed: int) -> TimeSeries:
    """Add Gaussian noise with std ``relative_level * RMS(signal)``."""
    if relative_level < 0:
        raise ValueError("relative_level must be >= 0")
    if relative_level == 0:
        return ts.replace(samples=ts.samples.copy())
    rms = float(np.sqrt(np.mean(ts.samples**2)))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(ts)) * (relative_level * rms)
    return ts.replace(samples=ts.samples + noise)
