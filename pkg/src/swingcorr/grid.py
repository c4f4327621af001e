"""Linearized grid model: case files, DC Laplacian, Kron reduction, output maps.

The network is treated under the DC approximation (lossless lines, flat
voltage magnitudes), so the power-flow Jacobian on generator angles is the
Kron-reduced susceptance Laplacian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components


class CaseError(ValueError):
    """Malformed or invalid case file / case data."""


class NetworkError(ValueError):
    """Topology problem (disconnected network, singular interior block)."""


@dataclass(frozen=True)
class Bus:
    id: int
    is_gen: bool
    inertia: float = 0.0
    damping: float = 0.0
    is_load: bool = False


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    base_hz: float = 60.0

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus id")
        known = set(ids)
        for ln in self.lines:
            for end in (ln.from_bus, ln.to_bus):
                if end not in known:
                    raise CaseError(f"line {ln.label} references unknown bus {end}")
            if ln.from_bus == ln.to_bus:
                raise CaseError(f"line {ln.label} is a self-loop")
            if not ln.susceptance > 0:
                raise CaseError(f"line {ln.label}: susceptance must be > 0")
        gens = [b for b in self.buses if b.is_gen]
        if len(gens) < 2:
            raise CaseError(f"at least 2 generator buses required, got {len(gens)}")
        for b in gens:
            if not b.inertia > 0:
                raise CaseError(f"generator {b.id}: inertia must be > 0")
            if not b.damping >= 0:
                raise CaseError(f"generator {b.id}: damping must be >= 0")
        if not self.base_hz > 0:
            raise CaseError("base_hz must be > 0")

    @property
    def bus_ids(self) -> list[int]:
        return [b.id for b in self.buses]

    @property
    def generator_ids(self) -> list[int]:
        return [b.id for b in self.buses if b.is_gen]

    @property
    def generator_index(self) -> list[int]:
        return [i for i, b in enumerate(self.buses) if b.is_gen]

    @property
    def load_ids(self) -> list[int]:
        return [b.id for b in self.buses if b.is_load and not b.is_gen]


def _parse_number(tok: str, path, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseError(f"{path}:{lineno}: cannot parse {what} {tok!r}") from None


def parse_case(text: str, source: str = "<string>") -> GridCase:
    """Parse the ``.case`` text format (``[system]``, ``[buses]``, ``[lines]``)."""
    section = None
    buses: list[Bus] = []
    lines: list[Line] = []
    base_hz = 60.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("system", "buses", "lines"):
                raise CaseError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        toks = line.split()
        if section is None:
            raise CaseError(f"{source}:{lineno}: data outside of a section")
        if section == "system":
            if len(toks) != 2:
                raise CaseError(f"{source}:{lineno}: expected 'key value'")
            if toks[0] != "base_hz":
                raise CaseError(f"{source}:{lineno}: unknown system key {toks[0]!r}")
            base_hz = _parse_number(toks[1], source, lineno, "base_hz")
        elif section == "buses":
            if len(toks) not in (4, 5):
                raise CaseError(
                    f"{source}:{lineno}: bus record needs 'id is_gen inertia damping [is_load]'"
                )
            try:
                bid = int(toks[0])
            except ValueError:
                raise CaseError(f"{source}:{lineno}: bus id must be an integer") from None
            flag = toks[1]
            if flag not in ("0", "1"):
                raise CaseError(f"{source}:{lineno}: is_gen must be 0 or 1")
            is_gen = flag == "1"
            inertia = _parse_number(toks[2], source, lineno, "inertia")
            damping = _parse_number(toks[3], source, lineno, "damping")
            if len(toks) == 5:
                if toks[4] not in ("0", "1"):
                    raise CaseError(f"{source}:{lineno}: is_load must be 0 or 1")
                is_load = toks[4] == "1"
            else:
                is_load = not is_gen
            buses.append(Bus(bid, is_gen, inertia, damping, is_load))
        else:
            if len(toks) != 3:
                raise CaseError(f"{source}:{lineno}: line record needs 'from to susceptance'")
            try:
                f, t = int(toks[0]), int(toks[1])
            except ValueError:
                raise CaseError(f"{source}:{lineno}: line endpoints must be integers") from None
            lines.append(Line(f, t, _parse_number(toks[2], source, lineno, "susceptance")))
    if not buses:
        raise CaseError(f"{source}: no [buses] records")
    return GridCase(tuple(buses), tuple(lines), base_hz)


def load_case(path) -> GridCase:
    """Read and validate a case file.  ``wscc9.case`` resolves to the bundled copy."""
    p = Path(path)
    if not p.exists() and p.name == str(path) and p.name in bundled_cases():
        text = resources.files("swingcorr.data").joinpath(p.name).read_text("utf-8")
        return parse_case(text, p.name)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise CaseError(f"cannot read case file {path}: {exc}") from exc
    return parse_case(text, str(path))


def bundled_cases() -> list[str]:
    return sorted(
        f.name for f in resources.files("swingcorr.data").iterdir() if f.name.endswith(".case")
    )


def build_laplacian(case: GridCase) -> np.ndarray:
    """Susceptance-weighted Laplacian over all buses (case bus order)."""
    pos = {bid: i for i, bid in enumerate(case.bus_ids)}
    n = len(pos)
    L = np.zeros((n, n))
    for ln in case.lines:
        i, j = pos[ln.from_bus], pos[ln.to_bus]
        L[i, j] -= ln.susceptance
        L[j, i] -= ln.susceptance
        L[i, i] += ln.susceptance
        L[j, j] += ln.susceptance
    w = np.linalg.eigvalsh(L)
    tol = 1e-8 * max(1.0, float(np.abs(w).max()))
    nzero = int(np.sum(np.abs(w) <= tol))
    if nzero > 1:
        raise NetworkError(f"network is disconnected ({nzero} components)")
    return L


def kron_reduce(L: np.ndarray, generator_buses) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate non-generator buses.

    Returns ``(K, A)`` with ``K = L_GG - L_GL L_LL^-1 L_LG`` and the interior
    angle map ``A = -L_LL^-1 L_LG`` (``theta_interior = A @ delta``).
    """
    L = np.asarray(L, dtype=float)
    gen = list(generator_buses)
    if not gen:
        raise NetworkError("generator index set is empty")
    interior = [i for i in range(L.shape[0]) if i not in set(gen)]
    L_GG = L[np.ix_(gen, gen)]
    if not interior:
        return L_GG.copy(), np.zeros((0, len(gen)))
    L_LL = L[np.ix_(interior, interior)]
    L_LG = L[np.ix_(interior, gen)]
    # an interior island with no path to a generator makes L_LL singular
    adj = (np.abs(L_LL) > 0) & ~np.eye(len(interior), dtype=bool)
    ncomp, comp = connected_components(adj, directed=False)
    for c in range(ncomp):
        members = [k for k in range(len(interior)) if comp[k] == c]
        if not np.any(np.abs(L_LG[members]) > 0):
            raise NetworkError(
                "interior block is singular; buses "
                f"{[interior[k] for k in members]} have no path to a generator"
            )
    A = -np.linalg.solve(L_LL, L_LG)
    K = L_GG + L[np.ix_(gen, interior)] @ A
    K = 0.5 * (K + K.T)
    return K, A


def line_flow_map(case: GridCase, A: np.ndarray) -> np.ndarray:
    """Rows ``f`` with ``p_nm = f @ delta`` for every line, in case order."""
    gen_pos = {bid: k for k, bid in enumerate(case.generator_ids)}
    interior_ids = [b.id for b in case.buses if not b.is_gen]
    int_pos = {bid: k for k, bid in enumerate(interior_ids)}
    ngen = len(gen_pos)

    def angle_row(bid):
        if bid in gen_pos:
            r = np.zeros(ngen)
            r[gen_pos[bid]] = 1.0
            return r
        return A[int_pos[bid]]

    F = np.zeros((len(case.lines), ngen))
    for r, ln in enumerate(case.lines):
        F[r] = ln.susceptance * (angle_row(ln.from_bus) - angle_row(ln.to_bus))
    return F


@dataclass(frozen=True)
class GridModel:
    """Swing-dynamics matrices on generator coordinates plus output maps.

    ``M`` and ``D`` are in swing-equation units (angle in rad, time in s):
    the case's inertia/damping columns divided by ``2*pi*base_hz``.
    """

    M: np.ndarray
    D: np.ndarray
    K: np.ndarray
    A: np.ndarray
    F: np.ndarray
    generator_ids: tuple[int, ...]
    interior_ids: tuple[int, ...]
    line_labels: tuple[str, ...]
    load_ids: tuple[int, ...] = ()
    laplacian: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.generator_ids)

    @property
    def inertia(self) -> np.ndarray:
        return np.diag(self.M).copy()

    def damping_ratio(self) -> float | None:
        """Uniform ``gamma`` with ``D = gamma M``, or None when damping is non-uniform."""
        r = np.diag(self.D) / np.diag(self.M)
        if np.allclose(r, r[0], rtol=1e-9, atol=0.0):
            return float(r[0])
        return None

    def with_damping(self, gamma=None, per_generator=None) -> "GridModel":
        """Copy with ``D = gamma*M`` or with an explicit per-generator ratio list."""
        if gamma is not None:
            if not gamma >= 0:
                raise ValueError("gamma must be >= 0")
            D = gamma * self.M
        elif per_generator is not None:
            ratios = np.asarray(per_generator, dtype=float)
            if ratios.shape != (self.n,) or np.any(ratios < 0):
                raise ValueError(f"need {self.n} nonnegative damping ratios")
            D = np.diag(ratios * np.diag(self.M))
        else:
            return self
        return GridModel(self.M, D, self.K, self.A, self.F, self.generator_ids,
                         self.interior_ids, self.line_labels, self.load_ids, self.laplacian)

    def bus_angle_row(self, bus_id: int) -> np.ndarray:
        if bus_id in self.generator_ids:
            r = np.zeros(self.n)
            r[self.generator_ids.index(bus_id)] = 1.0
            return r
        if bus_id in self.interior_ids:
            return self.A[self.interior_ids.index(bus_id)].copy()
        raise KeyError(f"unknown bus {bus_id}")

    def flow_row(self, label: str) -> np.ndarray:
        try:
            return self.F[self.line_labels.index(label)].copy()
        except ValueError:
            raise KeyError(f"unknown line {label}") from None

    def load_injection_map(self) -> np.ndarray:
        """Generator-coordinate injection per unit load-bus injection (N x n_loads).

        Equals ``-L_GL L_LL^-1`` restricted to load columns, i.e. ``A.T``.
        """
        cols = [self.interior_ids.index(b) for b in self.load_ids]
        return self.A[cols].T.copy()


def build_model(case: GridCase) -> GridModel:
    L = build_laplacian(case)
    gen_idx = case.generator_index
    K, A = kron_reduce(L, gen_idx)
    F = line_flow_map(case, A)
    scale = 2.0 * math.pi * case.base_hz
    gens = [b for b in case.buses if b.is_gen]
    M = np.diag([b.inertia / scale for b in gens])
    D = np.diag([b.damping / scale for b in gens])
    return GridModel(
        M=M, D=D, K=K, A=A, F=F,
        generator_ids=tuple(case.generator_ids),
        interior_ids=tuple(b.id for b in case.buses if not b.is_gen),
        line_labels=tuple(ln.label for ln in case.lines),
        load_ids=tuple(case.load_ids),
        laplacian=L,
    )


def chain_case(n_gen: int, inertia: float = 1.0, susceptance: float = 1.0,
               gamma: float = 0.2, base_hz: float | None = None) -> GridCase:
    """All-generator chain 1-2-...-n with uniform parameters.

    ``base_hz`` defaults to ``1/(2*pi)`` so the swing-equation inertia equals ``inertia``.
    """
    if base_hz is None:
        base_hz = 1.0 / (2.0 * math.pi)
    buses = tuple(Bus(i, True, inertia, gamma * inertia) for i in range(1, n_gen + 1))
    lines = tuple(Line(i, i + 1, susceptance) for i in range(1, n_gen))
    return GridCase(buses, lines, base_hz)
