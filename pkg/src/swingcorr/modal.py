"""Modal decomposition of uniformly damped swing dynamics and closed-form responses."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("frequency", "rotor-angle", "bus-angle", "line-flow")

_SYM_TOL = 1e-10
_PSD_TOL = 1e-8
_DEFLATE_REL = 1e-8
_CRITICAL_TOL = 1e-12
_IMAG_TOL = 1e-10


class ModalError(ValueError):
    pass


@dataclass(frozen=True)
class ModalDecomposition:
    V: np.ndarray
    lambdas: np.ndarray
    gamma: float
    c: np.ndarray
    d: np.ndarray
    eta: np.ndarray  # nan for critically damped modes
    zero_mode_count: int

    @property
    def n(self) -> int:
        return len(self.lambdas)

    @property
    def mode_params(self) -> list[tuple[complex, complex, complex]]:
        return list(zip(self.c, self.d, self.eta))

    @property
    def critical(self) -> np.ndarray:
        return np.isnan(self.eta.real)

    @property
    def retained(self) -> np.ndarray:
        idx = np.arange(self.n)
        return idx >= self.zero_mode_count

    def mode_frequencies_hz(self) -> np.ndarray:
        return np.abs(self.c.imag) / (2 * np.pi)


def _sign_convention(v: np.ndarray) -> np.ndarray:
    """Flip columns so the first clearly nonzero entry is positive."""
    v = v.copy()
    for j in range(v.shape[1]):
        col = v[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))
        if nz.size and col[nz[0]] < 0:
            v[:, j] = -col
    return v


def decompose(M, K, gamma: float) -> ModalDecomposition:
    """Solve ``K V = M V Lambda`` with ``V.T M V = I`` for diagonal ``M``.

    Uses the congruence ``W = M^-1/2 K M^-1/2``; eigenvalues ascending.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if M.shape != K.shape or M.shape[0] != M.shape[1]:
        raise ModalError("M and K must be square and of equal size")
    m = np.diag(M)
    if np.any(np.abs(M - np.diag(m)) > 0):
        raise ModalError("M must be diagonal")
    if np.any(m <= 0):
        raise ModalError("M must have positive diagonal")
    if np.abs(K - K.T).max(initial=0.0) > _SYM_TOL * max(1.0, np.abs(K).max()):
        raise ModalError("K is not symmetric")
    if not gamma >= 0:
        raise ModalError("gamma must be >= 0")
    s = 1.0 / np.sqrt(m)
    W = s[:, None] * (0.5 * (K + K.T)) * s[None, :]
    lam, U = np.linalg.eigh(W)
    if lam[0] < -_PSD_TOL:
        raise ModalError(f"K is not positive semidefinite (lambda_min={lam[0]:.3e})")
    order = np.argsort(lam, kind="stable")
    lam = np.clip(lam[order], 0.0, None)
    U = _sign_convention(U[:, order])
    V = s[:, None] * U

    tol = _DEFLATE_REL * lam.max(initial=0.0)
    zero_count = int(np.sum(lam <= tol))

    disc = np.sqrt((gamma**2 - 4 * lam).astype(complex))
    c = (-gamma + disc) / 2
    d = (-gamma - disc) / 2
    eta = np.full(len(lam), np.nan, dtype=complex)
    ok = np.abs(disc) > _CRITICAL_TOL
    eta[ok] = 1.0 / disc[ok]
    return ModalDecomposition(V, lam, float(gamma), c, d, eta, zero_count)


def _coeffs(dec: ModalDecomposition, k: int, target) -> np.ndarray:
    """Per-mode weight ``V_ki * (row . V_:,i)`` for a source generator and output row."""
    if np.isscalar(target) or np.ndim(target) == 0:
        row = np.zeros(dec.n)
        row[int(target)] = 1.0
    else:
        row = np.asarray(target, dtype=float)
        if row.shape != (dec.n,):
            raise ModalError(f"output row must have length {dec.n}")
    return dec.V[k] * (row @ dec.V)


def _angle_kernel(dec, i, tau, derivative):
    c, d, eta = dec.c[i], dec.d[i], dec.eta[i]
    if np.isnan(eta.real):
        # critically damped limit of eta*(e^{c t} - e^{d t})
        e = np.exp(c * tau)
        return tau * e if derivative == 0 else (1 + c * tau) * e
    if derivative == 0:
        return eta * (np.exp(c * tau) - np.exp(d * tau))
    return eta * (c * np.exp(c * tau) - d * np.exp(d * tau))


def _realify(z: np.ndarray) -> np.ndarray:
    resid = np.abs(z.imag).max(initial=0.0)
    scale = max(1.0, np.abs(z.real).max(initial=0.0))
    if resid > _IMAG_TOL * scale:
        raise ModalError(f"non-negligible imaginary residue {resid:.3e}")
    return z.real.copy()


@dataclass(frozen=True)
class ImpulseResponse:
    kind: str
    source: str
    target: str
    lags: np.ndarray
    samples: np.ndarray
    physical: bool = True

    @property
    def step(self) -> float:
        return float(self.lags[1] - self.lags[0]) if len(self.lags) > 1 else 0.0


def modal_response(dec: ModalDecomposition, k: int, target, tau, derivative: int = 0) -> np.ndarray:
    """Zero-mode-deflated response of ``row . delta`` (or its derivative) to a unit impulse at ``k``."""
    tau = np.asarray(tau, dtype=float)
    w = _coeffs(dec, k, target)
    out = np.zeros(tau.shape, dtype=complex)
    for i in np.flatnonzero(dec.retained):
        out += w[i] * _angle_kernel(dec, i, tau, derivative)
    return _realify(out)


def impulse_response(dec: ModalDecomposition, kind: str, k: int, target, tau,
                     source_label: str | None = None, target_label: str | None = None
                     ) -> ImpulseResponse:
    """Model-based impulse response on ``tau`` (must start at 0).

    ``target`` is a generator index or an output row over generator angles
    (a bus-angle row of ``A`` or a flow row of ``F``).
    """
    if kind not in KINDS:
        raise ModalError(f"unknown response kind {kind!r}")
    tau = np.asarray(tau, dtype=float)
    if tau.size == 0 or tau[0] != 0:
        raise ModalError("tau grid must start at 0")
    derivative = 1 if kind == "frequency" else 0
    samples = modal_response(dec, k, target, tau, derivative)
    return ImpulseResponse(kind, source_label or f"u{k}", target_label or str(target),
                           tau, samples, True)


def analytic_angle_xcorr(dec: ModalDecomposition, alpha: float, k: int, l, tau) -> np.ndarray:
    """Stationary ``E[delta_k(t) delta_l(t - tau)]`` under white input with covariance ``alpha*M``.

    ``l`` may be a generator index or an output row.  Zero modes must be
    deflated (the expression diverges for ``c = 0``).
    """
    if not dec.gamma > 0:
        raise ModalError("gamma must be > 0 for a stationary correlation")
    tau = np.abs(np.asarray(tau, dtype=float))
    w = _coeffs(dec, k, l)
    g = dec.gamma
    out = np.zeros(tau.shape, dtype=complex)
    for i in np.flatnonzero(dec.retained):
        c, d, eta = dec.c[i], dec.d[i], dec.eta[i]
        if c.real >= 0 or d.real >= 0:
            raise ModalError("zero or unstable mode in correlation sum")
        if np.isnan(eta.real):
            lam = dec.lambdas[i]
            term = alpha / (2 * g * lam) * (1 - c * tau) * np.exp(c * tau)
        else:
            term = -alpha * eta**2 * (
                (1 / (2 * c) + 1 / g) * np.exp(c * tau) + (1 / (2 * d) + 1 / g) * np.exp(d * tau)
            )
        out += w[i] * term
    return _realify(out)
