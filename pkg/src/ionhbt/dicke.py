"""Driven-dissipative engine for one or two identical emitters.

Builds the rotating-frame generator, finds its steady state, and evaluates
direction-resolved one- and two-time photon correlations by propagating
jumped states under the same generator.  Dimensions stay tiny (Hilbert
space at most 9), so everything uses exact dense linear algebra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .params import AtomParams, LaserParams, ParameterError


class EngineError(RuntimeError):
    """Numerical failure inside the quantum engine."""


class SteadyStateError(EngineError):
    """The generator nullspace is empty or degenerate."""


class DarkDirectionError(EngineError):
    """Requested correlation in a direction with zero detection rate."""


class DivergenceError(ZeroDivisionError):
    """The analytic pair correlation diverges (s = 0 at the dark fringe)."""


# ---------------------------------------------------------------------------
# systems


@dataclass(frozen=True)
class QuantumSystem:
    """Hamiltonian + collapse channels of the driven crystal.

    `lowering` holds the per-ion operators of the detected (short-lived)
    transition; detection operators are phase combinations of these.
    """

    levels_per_ion: int
    ion_count: int
    hamiltonian: np.ndarray
    collapse_channels: tuple[tuple[np.ndarray, float], ...]
    lowering: tuple[np.ndarray, ...]
    basis_labels: tuple[str, ...]

    def __post_init__(self):
        h = self.hamiltonian
        scale = max(np.abs(h).max(), 1.0)
        if np.abs(h - h.conj().T).max() > 1e-12 * scale:
            raise ParameterError("hamiltonian must be Hermitian")
        if any(rate < 0 for _, rate in self.collapse_channels):
            raise ParameterError("collapse rates must be nonnegative")
        if self.dim not in (2, 3, 4, 9):
            raise ParameterError(f"unsupported Hilbert dimension {self.dim}")

    @property
    def dim(self) -> int:
        return self.levels_per_ion ** self.ion_count


@dataclass(frozen=True)
class DensityMatrix:
    """State of the crystal, validated as a physical density operator."""

    entries: np.ndarray

    def validate(self, atol: float = 1e-10) -> "DensityMatrix":
        rho = self.entries
        if np.abs(rho - rho.conj().T).max() > atol:
            raise EngineError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > atol:
            raise EngineError(f"trace {np.trace(rho):.3e} != 1")
        eigs = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
        if eigs.min() < -atol:
            raise EngineError(f"negative eigenvalue {eigs.min():.3e}")
        return self


@dataclass(frozen=True)
class DetectionOperator:
    """sigma_1 + e^{i delta} sigma_2 (a single sigma for one ion)."""

    phase: float
    matrix: np.ndarray


def _single_ion_ops(levels: int) -> dict[str, np.ndarray]:
    ops = {}
    basis = np.eye(levels)
    ops["lower"] = np.outer(basis[0], basis[1])  # |g><e|
    ops["excited"] = np.outer(basis[1], basis[1])
    if levels == 3:
        ops["shelve"] = np.outer(basis[2], basis[1])  # |d><e|
        ops["repump"] = np.outer(basis[0], basis[2])  # |g><d|
    return ops


def _embed(op: np.ndarray, ion: int, ion_count: int, levels: int) -> np.ndarray:
    if ion_count == 1:
        return op
    eye = np.eye(levels)
    return np.kron(op, eye) if ion == 0 else np.kron(eye, op)


_LEVEL_NAMES = {2: "ge", 3: "ged"}


def _labels(levels: int, ion_count: int) -> tuple[str, ...]:
    names = _LEVEL_NAMES[levels]
    if ion_count == 1:
        return tuple(names)
    return tuple(a + b for a in names for b in names)


def build_two_level_system(laser: LaserParams, atom: AtomParams,
                           ion_count: int = 2) -> QuantumSystem:
    """Both ions driven with equal Rabi frequency and equal phase.

    The relative optical phase of laser arrival is bookkept inside the
    detection phase delta, not here, so the drive couples only the
    symmetric combination of the ions.
    """
    laser = saturation_conversions(laser, atom)
    levels = 2
    ops = _single_ion_ops(levels)
    dim = levels ** ion_count
    h = np.zeros((dim, dim), dtype=complex)
    channels = []
    lowering = []
    gamma = atom.linewidth
    omega = laser.rabi_frequency
    for ion in range(ion_count):
        low = _embed(ops["lower"], ion, ion_count, levels)
        exc = _embed(ops["excited"], ion, ion_count, levels)
        h += -laser.detuning * exc + 0.5 * omega * (low + low.conj().T)
        channels.append((low, gamma))
        lowering.append(low)
    return QuantumSystem(levels, ion_count, h, tuple(channels),
                         tuple(lowering), _labels(levels, ion_count))


def build_three_level_system(laser: LaserParams, atom: AtomParams,
                             repump_rate: float, ion_count: int = 2) -> QuantumSystem:
    """Adds the per-ion metastable shelf fed by a share of the total decay.

    The shelf is repumped incoherently at `repump_rate`; zero repump drains
    all population into the doubly-shelved state.
    """
    if repump_rate < 0:
        raise ParameterError("repump rate must be nonnegative")
    laser = saturation_conversions(laser, atom)
    levels = 3
    ops = _single_ion_ops(levels)
    dim = levels ** ion_count
    h = np.zeros((dim, dim), dtype=complex)
    channels = []
    lowering = []
    gamma = atom.linewidth
    gamma_shelf = gamma * atom.branching_to_metastable
    gamma_ground = gamma - gamma_shelf
    omega = laser.rabi_frequency
    for ion in range(ion_count):
        low = _embed(ops["lower"], ion, ion_count, levels)
        exc = _embed(ops["excited"], ion, ion_count, levels)
        h += -laser.detuning * exc + 0.5 * omega * (low + low.conj().T)
        channels.append((low, gamma_ground))
        channels.append((_embed(ops["shelve"], ion, ion_count, levels), gamma_shelf))
        if repump_rate > 0:
            channels.append((_embed(ops["repump"], ion, ion_count, levels),
                             repump_rate))
        lowering.append(low)
    return QuantumSystem(levels, ion_count, h, tuple(channels),
                         tuple(lowering), _labels(levels, ion_count))


def saturation_conversions(laser: LaserParams, atom: AtomParams) -> LaserParams:
    """Fill in whichever of saturation / Rabi frequency is missing.

    s = (Omega^2 / 2) / (Delta^2 + Gamma^2 / 4); the round trip is exact.
    """
    gamma = atom.linewidth
    if gamma <= 0:
        raise ParameterError("linewidth must be positive")
    denom = laser.detuning ** 2 + gamma ** 2 / 4
    if laser.saturation is not None:
        omega = math.sqrt(2 * laser.saturation * denom)
        return replace(laser, rabi_frequency=omega)
    omega = laser.rabi_frequency
    return replace(laser, saturation=0.5 * omega * omega / denom)


def detection_operator(system: QuantumSystem, delta: float) -> DetectionOperator:
    """Far-field photon annihilation towards a detector at phase delta."""
    matrix = system.lowering[0].astype(complex).copy()
    for ion, low in enumerate(system.lowering[1:], start=1):
        matrix = matrix + np.exp(1j * delta * ion) * low
    return DetectionOperator(phase=delta, matrix=matrix)


# ---------------------------------------------------------------------------
# generator and steady state
#
# Density matrices are flattened row-major, so vec(A rho B) = (A kron B^T) vec(rho).


def liouvillian(system: QuantumSystem) -> np.ndarray:
    dim = system.dim
    eye = np.eye(dim)
    h = system.hamiltonian
    gen = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for op, rate in system.collapse_channels:
        opc = op.conj()
        anti = op.conj().T @ op
        gen += rate * (np.kron(op, opc)
                       - 0.5 * (np.kron(anti, eye) + np.kron(eye, anti.T)))
    return gen


class GeneratorSpectrum:
    """Eigendecomposition of the generator, cached for repeated propagation."""

    # eigenvector conditioning beyond this falls back to scipy.linalg.expm
    MAX_CONDITION = 1e8

    def __init__(self, system: QuantumSystem):
        self.system = system
        self.generator = liouvillian(system)
        self.rate_scale = max(np.abs(self.generator).max(), 1.0)
        w, v = np.linalg.eig(self.generator)
        cond = np.linalg.cond(v)
        self._diagonalizable = cond < self.MAX_CONDITION
        if self._diagonalizable:
            self.eigenvalues = w
            self._v = v
            self._v_lu = scipy.linalg.lu_factor(v)
        else:
            self.eigenvalues = w

    def propagate(self, state: np.ndarray, taus: np.ndarray) -> np.ndarray:
        """e^{L tau} applied to a (dim, dim) operator, for every tau. Returns
        an array of shape (ntau, dim, dim)."""
        dim = self.system.dim
        vec = state.reshape(dim * dim)
        taus = np.asarray(taus, dtype=float)
        if self._diagonalizable:
            coeff = scipy.linalg.lu_solve(self._v_lu, vec)
            # clip growing round-off modes: the physical spectrum has Re <= 0
            lam = self.eigenvalues
            phases = np.exp(np.outer(taus, lam)) * coeff
            out = phases @ self._v.T
            return out.reshape(len(taus), dim, dim)
        out = np.empty((len(taus), dim * dim), dtype=complex)
        order = np.argsort(taus)
        current = vec
        t_prev = 0.0
        for idx in order:
            step = taus[idx] - t_prev
            if step:
                current = scipy.linalg.expm(self.generator * step) @ current
                t_prev = taus[idx]
            out[idx] = current
        return out.reshape(len(taus), dim, dim)

    def steady_state(self) -> DensityMatrix:
        """Trace-one kernel vector of the generator.

        Requires at least one decaying channel; a degenerate kernel is
        reported with its dimension instead of silently picking a vector.
        """
        if not any(rate > 0 for _, rate in self.system.collapse_channels):
            raise SteadyStateError("no dissipation: steady state undefined")
        dim = self.system.dim
        w = self.eigenvalues
        tol = 1e-10 * self.rate_scale
        kernel = np.where(np.abs(w) < tol)[0]
        if len(kernel) == 0:
            raise SteadyStateError("generator kernel is empty (nullspace dim 0)")
        if len(kernel) > 1:
            raise SteadyStateError(
                f"degenerate steady state (nullspace dim {len(kernel)})")
        if self._diagonalizable:
            vec = self._v[:, kernel[0]]
        else:
            vec = scipy.linalg.null_space(self.generator, rcond=1e-12)[:, 0]
        rho = vec.reshape(dim, dim)
        rho = (rho + rho.conj().T) / 2
        rho = rho / np.trace(rho).real
        residual = np.abs(self.generator @ rho.reshape(-1)).max() / self.rate_scale
        if residual > 1e-10:
            # ill-conditioned kernel: refine by propagating to long times
            horizon = 50.0 / self.rate_scale * dim * dim
            rho = self.propagate(rho, np.array([horizon]))[0]
            rho = (rho + rho.conj().T) / 2
            rho = rho / np.trace(rho).real
            residual = np.abs(self.generator @ rho.reshape(-1)).max() / self.rate_scale
            if residual > 1e-10:
                raise SteadyStateError(f"kernel residual {residual:.2e} too large")
        return DensityMatrix(rho).validate()


def steady_state(system: QuantumSystem) -> DensityMatrix:
    return GeneratorSpectrum(system).steady_state()


# ---------------------------------------------------------------------------
# correlations


@dataclass(frozen=True)
class TwoTimeTable:
    """Phase-independent part of the pair correlation.

    m[a, b, c, d, k] = Tr[sig_c^dag sig_d  e^{L tau_k}(sig_a rho sig_b^dag)]
    intensity[c, d] = Tr[sig_c^dag sig_d rho]

    Any pair of detection phases is an analytic combination of these, so
    scans over delta or averages over a phase distribution reuse one table.
    """

    taus: np.ndarray
    m: np.ndarray
    intensity: np.ndarray

    @property
    def ion_count(self) -> int:
        return self.m.shape[0]


def two_time_table(system: QuantumSystem, taus,
                   spectrum: GeneratorSpectrum | None = None,
                   rho: np.ndarray | None = None) -> TwoTimeTable:
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if (taus < 0).any():
        raise ParameterError("correlation delays must be nonnegative")
    if spectrum is None:
        spectrum = GeneratorSpectrum(system)
    if rho is None:
        rho = spectrum.steady_state().entries
    n = system.ion_count
    lows = system.lowering
    m = np.empty((n, n, n, n, len(taus)), dtype=complex)
    intensity = np.empty((n, n), dtype=complex)
    for c in range(n):
        for d in range(n):
            intensity[c, d] = np.trace(lows[c].conj().T @ lows[d] @ rho)
    for a in range(n):
        for b in range(n):
            jumped = lows[a] @ rho @ lows[b].conj().T
            evolved = spectrum.propagate(jumped, taus)
            for c in range(n):
                for d in range(n):
                    probe = (lows[c].conj().T @ lows[d]).T
                    m[a, b, c, d] = np.einsum("kij,ij->k", evolved, probe)
    return TwoTimeTable(taus=taus, m=m, intensity=intensity)


def _phase_vector(table_ions: int, delta: float) -> np.ndarray:
    return np.exp(1j * delta * np.arange(table_ions))


def intensity_at(table: TwoTimeTable, delta: float) -> float:
    """<D^dag(delta) D(delta)> in units of the single-ion decay rate."""
    p = _phase_vector(table.ion_count, delta)
    return float(np.einsum("c,d,cd->", p.conj(), p, table.intensity).real)


def pair_numerator(table: TwoTimeTable, delta1: float, delta2: float) -> np.ndarray:
    """<D1^dag D2^dag(tau) D2(tau) D1> for all tabulated delays."""
    p1 = _phase_vector(table.ion_count, delta1)
    p2 = _phase_vector(table.ion_count, delta2)
    out = np.einsum("a,b,c,d,abcdk->k", p1, p1.conj(), p2.conj(), p2, table.m)
    return out.real


def g2_from_table(table: TwoTimeTable, delta1: float,
                  delta2: float | None = None) -> np.ndarray:
    if delta2 is None:
        delta2 = delta1
    i1 = intensity_at(table, delta1)
    i2 = intensity_at(table, delta2)
    floor = 1e-12 * max(np.abs(table.intensity).max(), 1e-300)
    if i1 <= floor or i2 <= floor:
        raise DarkDirectionError(
            f"zero detection rate at delta = {delta1:.4g} / {delta2:.4g}")
    return pair_numerator(table, delta1, delta2) / (i1 * i2)


def g2_tau(system: QuantumSystem, d1: DetectionOperator, d2: DetectionOperator,
           taus) -> np.ndarray:
    """Normalized pair correlation between detectors d1 (first click) and d2."""
    table = two_time_table(system, taus)
    return g2_from_table(table, d1.phase, d2.phase)


def g2_zero_analytic(s: float, delta: float) -> float:
    """Ideal zero-delay pair correlation of two driven immobile emitters."""
    if s < 0:
        raise ParameterError("saturation must be nonnegative")
    denom = 1.0 + s + math.cos(delta)
    if denom == 0.0:
        raise DivergenceError("pair correlation diverges at s = 0, delta = pi")
    return (1.0 + s) ** 2 / denom ** 2


def heralded_state(rho: DensityMatrix | np.ndarray,
                   d: DetectionOperator) -> DensityMatrix:
    """Conditional state right after a photon detection: D rho D^dag, renormalized."""
    entries = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    jumped = d.matrix @ entries @ d.matrix.conj().T
    norm = np.trace(jumped).real
    if norm <= 1e-14:
        raise DarkDirectionError(
            f"detection rate vanishes at delta = {d.phase:.4g}")
    return DensityMatrix(jumped / norm).validate()


# ---------------------------------------------------------------------------
# Dicke-basis helpers (two ions)


def dicke_states(system: QuantumSystem) -> dict[str, np.ndarray]:
    """|gg>, |s>, |a>, |ee> as vectors in the system's product basis."""
    if system.ion_count != 2:
        raise ParameterError("Dicke basis needs two ions")
    dim = system.dim
    levels = system.levels_per_ion

    def ket(i, j):
        v = np.zeros(dim)
        v[i * levels + j] = 1.0
        return v

    g, e = 0, 1
    s = (ket(e, g) + ket(g, e)) / math.sqrt(2)
    a = (ket(e, g) - ket(g, e)) / math.sqrt(2)
    return {"gg": ket(g, g), "s": s, "a": a, "ee": ket(e, e)}


def one_excitation_component(rho: DensityMatrix | np.ndarray,
                             system: QuantumSystem) -> np.ndarray:
    """Block of rho on span{|eg>, |ge>}, renormalized to unit trace."""
    entries = rho.entries if isinstance(rho, DensityMatrix) else np.asarray(rho)
    states = dicke_states(system)
    basis = np.column_stack([states["s"], states["a"]])
    block = basis.conj().T @ entries @ basis
    tr = np.trace(block).real
    if tr <= 1e-14:
        raise EngineError("no single-excitation population in state")
    return block / tr
