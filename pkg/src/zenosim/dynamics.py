"""Time evolution under a pulse schedule, with and without dissipation.

Unitary segments are propagated exactly through the eigendecomposition of
the constant segment Hamiltonian.  Dissipative evolution integrates the
Lindblad master equation

    drho/dt = -i[H, rho] + sum_k L_k rho L_k^dag - {L_k^dag L_k, rho}/2

with a fixed-step classical Runge-Kutta scheme and a step-halving
convergence check.  Collapse operators here are all single-ladder maps, so
sum_k L_k^dag L_k is diagonal and each L rho L^dag term is a gather of a
rho subblock; one sparse product for H rho dominates the step cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, NumericsError, TruncationError
from .hilbert import (
    DensityOperator,
    PureState,
    SystemDims,
    leak_mask,
    partial_trace_motion,
    up_count_projectors,
)
from .model import IonGeometry, NoiseModel, PulseSchedule, lindblad_operators, segment_hamiltonian

TOP_FOCK_LIMIT = 1e-8


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: tuple
    schedule: PulseSchedule

    @property
    def dims(self) -> SystemDims:
        return self.states[0].dims

    @property
    def final(self):
        return self.states[-1]


@dataclass(frozen=True)
class PopulationRecord:
    """Per-time populations sorted by number of ions in the up state.

    p_up_counts[t, k] is the probability of exactly k ions up (leak-level
    population excluded, reported separately), target_fidelity tracks the
    first requested target, and aux_populations holds every labelled series.
    """

    times: np.ndarray
    p_up_counts: np.ndarray
    target_fidelity: np.ndarray
    aux_populations: dict[str, np.ndarray]
    leak_population: np.ndarray


def _sample_times(schedule: PulseSchedule, sample_dt: float | None) -> np.ndarray:
    total = schedule.total_duration
    if sample_dt is None:
        sample_dt = total / 400.0 if total > 0 else 1.0
    if sample_dt <= 0:
        raise ValueError("sample_dt must be > 0")
    points = {0.0, *schedule.boundaries()}
    if total > 0:
        n = int(np.floor(total / sample_dt + 1e-9))
        points.update(k * sample_dt for k in range(1, n + 1))
    times = np.array(sorted(points))
    return times[times <= total + 1e-15]


def _top_fock_population(dims: SystemDims, state) -> float:
    idx = np.arange(dims.n_fock - 1, dims.dim, dims.n_fock)
    if isinstance(state, np.ndarray) and state.ndim == 1:
        return float(np.sum(np.abs(state[idx]) ** 2))
    mat = state if isinstance(state, np.ndarray) else state.matrix
    return float(np.sum(np.real(np.diag(mat)[idx])))


def _check_truncation(dims: SystemDims, state, t: float):
    pop = _top_fock_population(dims, state)
    if pop >= TOP_FOCK_LIMIT:
        raise TruncationError(
            f"top Fock level population {pop:.2e} at t = {t * 1e6:.2f} us exceeds {TOP_FOCK_LIMIT:.0e}; "
            "increase n_fock"
        )


def evolve_pure(
    schedule: PulseSchedule,
    dims: SystemDims,
    geom: IonGeometry,
    initial: PureState,
    sample_dt: float | None = None,
    stark_shifts: Sequence[float] | None = None,
) -> Trajectory:
    """Propagate a pure state exactly through each constant segment.

    States are sampled every sample_dt (default total/400) and at segment
    boundaries.  Raises TruncationError if the top Fock level is ever
    populated beyond 1e-8 and NumericsError if the norm drifts beyond 1e-9.
    """
    if initial.dims != dims:
        raise ValueError("initial state dims do not match")
    times = _sample_times(schedule, sample_dt)
    psi = initial.amplitudes.copy()
    states = []
    t_seg_start = 0.0
    seg_iter = iter(schedule.segments)
    seg = next(seg_iter)
    evals, evecs = np.linalg.eigh(segment_hamiltonian(dims, geom, seg, stark_shifts).matrix)
    psi_seg = evecs.conj().T @ psi  # coordinates of the segment-start state
    for t in times:
        # advance to the segment containing t
        while t > t_seg_start + seg.duration + 1e-15:
            psi = evecs @ (np.exp(-1j * evals * seg.duration) * psi_seg)
            t_seg_start += seg.duration
            seg = next(seg_iter)
            evals, evecs = np.linalg.eigh(segment_hamiltonian(dims, geom, seg, stark_shifts).matrix)
            psi_seg = evecs.conj().T @ psi
        phases = np.exp(-1j * evals * (t - t_seg_start))
        psi_t = evecs @ (phases * psi_seg)
        norm = np.linalg.norm(psi_t)
        if abs(norm - 1.0) > 1e-9:
            raise NumericsError(f"norm drift {abs(norm - 1.0):.2e} at t = {t:.3e} s")
        _check_truncation(dims, psi_t, t)
        states.append(PureState(dims, psi_t))
    return Trajectory(times, tuple(states), schedule)


class _LindbladRHS:
    """Master-equation right-hand side with precomputed operator structure.

    All package collapse operators are ladder maps with at most one nonzero
    per column, so L rho L^dag is a gather of a rho subblock scaled by the
    outer product of the nonzero values, and sum L^dag L is diagonal.  A
    sparse-product fallback covers any other operator shape.
    """

    def __init__(self, h: np.ndarray, collapse: list[np.ndarray]):
        self.h = sp.csr_matrix(h)
        self.gathers = []  # (row index, col index, value outer product)
        self.ls_general = []
        m_full = np.zeros_like(h)
        for l in collapse:
            m_full += l.conj().T @ l
            rows, cols = np.nonzero(l)
            if len(np.unique(cols)) == len(cols):
                vals = l[rows, cols]
                self.gathers.append((np.ix_(rows, rows), np.ix_(cols, cols), np.outer(vals, vals.conj())))
            else:
                self.ls_general.append(sp.csr_matrix(l))
        diag = np.real(np.diag(m_full))
        if np.linalg.norm(m_full - np.diag(diag)) < 1e-12 * max(1.0, np.abs(diag).max(initial=0.0)):
            self.m_diag = diag
            self.m_op = None
        else:
            self.m_diag = None
            self.m_op = sp.csr_matrix(m_full)
        eigs = np.linalg.eigvalsh(h)
        self.omega_max = float(np.max(np.abs(eigs))) if h.shape[0] else 0.0

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        b = self.h @ rho
        out = b - b.conj().T
        out *= -1j
        for dst, src, vv in self.gathers:
            out[dst] += vv * rho[src]
        for l in self.ls_general:
            a = l @ rho
            out += l @ a.conj().T
        if self.m_diag is not None:
            out -= 0.5 * (self.m_diag[:, None] * rho + rho * self.m_diag[None, :])
        elif self.m_op is not None:
            c = self.m_op @ rho
            out -= 0.5 * (c + c.conj().T)
        return out


def _rk4_span(rhs: _LindbladRHS, rho: np.ndarray, span: float, h_max: float) -> np.ndarray:
    n_steps = max(1, int(np.ceil(span / h_max - 1e-12)))
    h = span / n_steps
    for _ in range(n_steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * h * k1)
        k3 = rhs(rho + 0.5 * h * k2)
        k4 = rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


def evolve_density(
    schedule: PulseSchedule,
    dims: SystemDims,
    geom: IonGeometry,
    noise: NoiseModel,
    initial: DensityOperator,
    tol: float = 1e-6,
    sample_dt: float | None = None,
    max_refinements: int = 3,
) -> Trajectory:
    """Integrate the Lindblad master equation over the schedule.

    The base step obeys h <= min(2*pi / (50 * omega_max), tau_min / 20) with
    omega_max the largest Hamiltonian eigenfrequency over the segments and
    tau_min the shortest nonzero segment.  The whole integration is repeated
    with halved steps until the final states agree to tol in Frobenius norm.

    Trace is monitored to 1e-8 and positivity to a -1e-7 eigenvalue floor
    (checked at a subset of sample times for large systems); violations
    raise NumericsError rather than being projected away.
    """
    if initial.dims != dims:
        raise ValueError("initial state dims do not match")
    shifts = noise.shifts_or_zero(dims.n_ions)
    collapse = [op.matrix for op in lindblad_operators(dims, noise)]
    rhs_by_segment = [
        _LindbladRHS(segment_hamiltonian(dims, geom, seg, shifts).matrix, collapse)
        for seg in schedule.segments
    ]
    omega_max = max(r.omega_max for r in rhs_by_segment)
    durations = [s.duration for s in schedule.segments if s.duration > 0]
    tau_min = min(durations) if durations else 0.0
    h_base = np.inf
    if omega_max > 0:
        h_base = 2 * np.pi / (50.0 * omega_max)
    if tau_min > 0:
        h_base = min(h_base, tau_min / 20.0)
    if not np.isfinite(h_base):
        h_base = max(schedule.total_duration, 1e-9)

    times = _sample_times(schedule, sample_dt)

    def integrate(h_max: float) -> list[np.ndarray]:
        rho = initial.matrix.copy()
        out = []
        boundaries = schedule.boundaries()
        t_prev = 0.0
        seg_idx = 0
        for t in times:
            while t > boundaries[seg_idx + 1] + 1e-15:
                if boundaries[seg_idx + 1] > t_prev:
                    rho = _rk4_span(rhs_by_segment[seg_idx], rho, boundaries[seg_idx + 1] - t_prev, h_max)
                    t_prev = boundaries[seg_idx + 1]
                seg_idx += 1
            if t > t_prev + 1e-18:
                rho = _rk4_span(rhs_by_segment[seg_idx], rho, t - t_prev, h_max)
                t_prev = t
            out.append(rho.copy())
        return out

    samples = integrate(h_base)
    h = h_base
    for _ in range(max_refinements):
        finer = integrate(h / 2.0)
        diff = np.linalg.norm(finer[-1] - samples[-1])
        samples, h = finer, h / 2.0
        if diff < tol:
            break
    else:
        raise ConvergenceError(f"step halving did not reach tol = {tol:.1e} (last diff {diff:.2e})")

    # validity checks on the accepted samples
    check_every = 1 if dims.dim <= 150 else max(1, len(samples) // 16)
    states = []
    for i, (t, rho) in enumerate(zip(times, samples)):
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-8:
            raise NumericsError(f"trace drift {abs(tr - 1.0):.2e} at t = {t:.3e} s")
        _check_truncation(dims, rho, t)
        if i % check_every == 0 or i == len(samples) - 1:
            min_eig = float(np.linalg.eigvalsh(rho)[0])
            if min_eig < -1e-7:
                raise NumericsError(f"negative eigenvalue {min_eig:.2e} at t = {t:.3e} s")
        states.append(DensityOperator(dims, 0.5 * (rho + rho.conj().T)))
    return Trajectory(times, tuple(states), schedule)


def state_fidelity(dims: SystemDims, state, target: PureState) -> float:
    """Overlap with a target state.

    A target on the full space keeps its motional factor; a spin-only target
    (n_fock = 1) is compared against the motion-traced state.
    """
    if target.dims.n_fock == dims.n_fock and target.dims == dims:
        if isinstance(state, PureState):
            return float(abs(np.vdot(target.amplitudes, state.amplitudes)) ** 2)
        return float(np.real(np.vdot(target.amplitudes, state.matrix @ target.amplitudes)))
    if target.dims.n_fock == 1 and target.dims.n_ions == dims.n_ions and target.dims.leak_level == dims.leak_level:
        rho_spin = partial_trace_motion(dims, state)
        return float(np.real(np.vdot(target.amplitudes, rho_spin @ target.amplitudes)))
    raise ValueError("target dims are compatible with neither the full nor the spin-only space")


def extract_populations(
    traj: Trajectory,
    targets: Sequence[PureState],
    labels: Sequence[str] | None = None,
) -> PopulationRecord:
    """Population record of a trajectory.

    P_k sums the projectors onto all spin configurations with exactly k ions
    up, traced over motion.  The first target supplies the headline fidelity
    series; every target also appears in aux_populations under its label.
    """
    dims = traj.dims
    masks = up_count_projectors(dims)
    lmask = leak_mask(dims)
    if labels is None:
        labels = [f"target_{i}" for i in range(len(targets))]
    if len(labels) != len(targets):
        raise ValueError("labels must match targets")

    n_t = len(traj.times)
    p_up = np.zeros((n_t, dims.n_ions + 1))
    leak = np.zeros(n_t)
    fids = {lab: np.zeros(n_t) for lab in labels}
    for it, state in enumerate(traj.states):
        if isinstance(state, PureState):
            diag = np.abs(state.amplitudes) ** 2
        else:
            diag = np.real(np.diag(state.matrix))
        for k, mask in enumerate(masks):
            p_up[it, k] = float(diag @ mask)
        leak[it] = float(diag @ lmask)
        total = p_up[it].sum() + leak[it]
        if abs(total - 1.0) > 1e-8 and isinstance(state, PureState):
            raise NumericsError(f"populations sum to {total}, not 1")
        for lab, target in zip(labels, targets):
            fids[lab][it] = state_fidelity(dims, state, target)
    target_series = fids[labels[0]] if targets else np.zeros(n_t)
    return PopulationRecord(traj.times, p_up, target_series, fids, leak)
