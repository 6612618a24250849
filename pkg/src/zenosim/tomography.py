"""Fluorescence readout simulation and maximum-likelihood partial tomography.

The detection chain mirrors a shelving readout: ions in the up state scatter
a bright Poissonian of photons, down ions a dark one, and a small depump
probability mixes in counts from a random switching time, which is what
bends the histograms away from plain Poissonians.  The analysis never
assumes that shape; it estimates binned count distributions for "exactly n
ions bright" nonparametrically from reference experiments.

The fit alternates two monotone steps on one joint likelihood:

  * an EM-style multiplicative update of the per-class binned count
    probabilities q[n, b] with the state fixed, and
  * an R rho R update of the spin density matrix with q fixed, diluted
    (R -> (R + I) / 2) whenever the plain step would not increase the
    likelihood.

The measurement design is partial: it determines every quantity reported
here (populations by bright count and the overlap with the target state)
but not the whole density matrix.  A linear-combination certificate is
solved at construction time to prove the target projector lies in the span
of the measured operators.

Uncertainty comes from a parametric bootstrap (refitting data regenerated
from the fitted model) and a systematic term from refitting under imperfect
reference-state initialization.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ConvergenceError, NumericsError
from .hilbert import UP, SystemDims, named_state

REFERENCE_PHASES = tuple(np.pi * n / 4.0 for n in range(8))
ANALYSIS_PHASES = tuple(np.pi * n / 10.0 for n in range(20))


@dataclass(frozen=True)
class DetectionModel:
    bright_mean: float
    dark_mean: float
    pump_prob: float = 0.02
    window: float = 330e-6

    def __post_init__(self):
        if not self.bright_mean > self.dark_mean >= 0:
            raise ValueError("need bright_mean > dark_mean >= 0")
        if not 0 <= self.pump_prob < 1:
            raise ValueError("pump_prob must be in [0, 1)")


def two_ion_detection() -> DetectionModel:
    return DetectionModel(bright_mean=39.0, dark_mean=3.0)


def three_ion_detection() -> DetectionModel:
    return DetectionModel(bright_mean=37.0, dark_mean=3.0)


@dataclass(frozen=True)
class CountHistogram:
    counts_by_photon_number: dict[int, int]
    shots: int
    label: str = ""

    def __post_init__(self):
        total = sum(self.counts_by_photon_number.values())
        if total != self.shots:
            raise ValueError(f"histogram holds {total} counts but claims {self.shots} shots")

    @property
    def max_count(self) -> int:
        return max(self.counts_by_photon_number, default=0)

    def to_array(self, size: int) -> np.ndarray:
        arr = np.zeros(size)
        for c, k in self.counts_by_photon_number.items():
            if c >= size:
                raise ValueError(f"count {c} does not fit into array of size {size}")
            arr[c] = k
        return arr

    @classmethod
    def from_samples(cls, samples: np.ndarray, label: str = "") -> "CountHistogram":
        values, counts = np.unique(np.asarray(samples, dtype=int), return_counts=True)
        return cls({int(v): int(k) for v, k in zip(values, counts)}, int(len(samples)), label)


@dataclass(frozen=True)
class BinnedHistogram:
    boundaries: tuple[int, ...]
    bin_counts: np.ndarray
    shots: int

    def __post_init__(self):
        if int(np.sum(self.bin_counts)) != self.shots:
            raise ValueError("bin counts do not sum to the shot number")


@dataclass(frozen=True)
class MeasurementDesign:
    """Analysis rotations, bright-count projectors, and the certificate that
    a real combination of their statistics equals the target projector."""

    n_ions: int
    analysis_rotations: tuple[tuple[float, float], ...]
    unitaries: tuple[np.ndarray, ...]
    povm_elements: tuple[np.ndarray, ...]
    target: np.ndarray
    target_name: str
    fidelity_coefficients: np.ndarray
    residual: float


@dataclass(frozen=True)
class TomographyEstimate:
    rho_ml: np.ndarray
    fidelity: float
    populations: np.ndarray
    target_name: str
    converged: bool
    n_iterations: int
    log_likelihoods: np.ndarray
    ci_lower: float | None = None
    ci_upper: float | None = None
    epsilon_boot: float | None = None
    epsilon_syst: float = 0.0
    lr_percentile: float | None = None


@dataclass(frozen=True)
class FitInputs:
    """Everything fit_ml needs, bundled for bootstrap and sweeps."""

    references: tuple[CountHistogram, ...]
    data: tuple[CountHistogram, ...]
    design: MeasurementDesign
    boundaries: tuple[int, ...]
    stop: float = 1e-10
    max_outer: int = 5000
    ref_weights: np.ndarray | None = None


# ---------------------------------------------------------------------------
# single-ion rotations and reference weights


def rotation_2x2(theta: float, phi: float) -> np.ndarray:
    """Rotation by theta about the equatorial axis at azimuth phi."""
    sx = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    sy = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
    axis = np.cos(phi) * sx + np.sin(phi) * sy
    return np.cos(theta / 2.0) * np.eye(2) - 1j * np.sin(theta / 2.0) * axis


def reference_bright_probability(phi: float) -> float:
    """Bright survival after the 3pi/2 then pi/2(phi) reference sequence."""
    u = rotation_2x2(np.pi / 2.0, phi) @ rotation_2x2(3.0 * np.pi / 2.0, 0.0)
    return float(abs(u[0, 0]) ** 2)


def binomial_weights(p: float, n_ions: int) -> np.ndarray:
    """Probabilities of exactly n bright ions for independent identical ions."""
    return np.array([comb(n_ions, k) * p**k * (1 - p) ** (n_ions - k) for k in range(n_ions + 1)])


def reference_weights(n_ions: int, epsilon: float = 0.0) -> np.ndarray:
    """Per-phase class weights of the reference protocol.

    epsilon is an incoherent per-ion preparation error: with probability
    epsilon an ion starts in the wrong state, flipping its bright
    probability from p to 1 - p.
    """
    rows = []
    for phi in REFERENCE_PHASES:
        p = reference_bright_probability(phi)
        p_eff = (1.0 - epsilon) * p + epsilon * (1.0 - p)
        rows.append(binomial_weights(p_eff, n_ions))
    return np.array(rows)


# ---------------------------------------------------------------------------
# synthetic detection


def simulate_photon_counts(
    bright_probabilities, model: DetectionModel, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Per-shot total photon counts for a state with the given bright-ion
    distribution.

    Each shot draws the number of bright ions; every bright ion emits
    Poisson(bright_mean) photons unless it depumps (probability pump_prob),
    in which case the mean interpolates to dark_mean at a uniform random
    switching time.  Dark ions emit Poisson(dark_mean).
    """
    probs = np.asarray(bright_probabilities, dtype=float)
    if abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < -1e-12):
        raise ValueError("bright probabilities must be a distribution")
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    n_ions = len(probs) - 1
    k_bright = rng.choice(n_ions + 1, size=shots, p=probs)
    total = np.zeros(shots, dtype=int)
    for slot in range(n_ions):
        active = slot < k_bright
        depumped = rng.random(shots) < model.pump_prob
        u = rng.random(shots)
        means = np.where(depumped, u * model.bright_mean + (1.0 - u) * model.dark_mean, model.bright_mean)
        photons = rng.poisson(means)
        total += np.where(active, photons, 0)
    dark_ions = n_ions - k_bright
    total += rng.poisson(model.dark_mean * dark_ions)
    return total


def simulate_histogram(
    bright_probabilities, model: DetectionModel, shots: int, seed: int | np.random.Generator, label: str = ""
) -> CountHistogram:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return CountHistogram.from_samples(
        simulate_photon_counts(bright_probabilities, model, shots, rng), label
    )


def reference_shot_counts(
    model: DetectionModel, shots_per_phase: int, n_ions: int, seed: int
) -> list[np.ndarray]:
    """Raw per-shot counts for each of the eight reference phases."""
    children = np.random.SeedSequence(seed).spawn(len(REFERENCE_PHASES))
    weights = reference_weights(n_ions)
    return [
        simulate_photon_counts(weights[i], model, shots_per_phase, np.random.default_rng(children[i]))
        for i in range(len(REFERENCE_PHASES))
    ]


def reference_protocol(
    model: DetectionModel, shots_per_phase: int, n_ions: int, seed: int
) -> list[CountHistogram]:
    """Reference histograms, one per phase, 6000 shots each by convention."""
    counts = reference_shot_counts(model, shots_per_phase, n_ions, seed)
    return [
        CountHistogram.from_samples(c, label=f"ref_{i}") for i, c in enumerate(counts)
    ]


def split_reference_shots(
    counts: list[np.ndarray], fraction: float = 0.1
) -> tuple[list[CountHistogram], list[CountHistogram]]:
    """Deterministic held-out split: the first ceil(fraction * shots) shots
    of each phase go to bin selection, the rest to the analysis."""
    held, main = [], []
    for i, c in enumerate(counts):
        k = int(np.ceil(fraction * len(c)))
        held.append(CountHistogram.from_samples(c[:k], label=f"ref_{i}_held"))
        main.append(CountHistogram.from_samples(c[k:], label=f"ref_{i}"))
    return held, main


# ---------------------------------------------------------------------------
# binning


def rebin(hist: CountHistogram, boundaries) -> BinnedHistogram:
    """Contiguous rebinning; boundaries are the interior cut points, so bin b
    collects counts in [boundaries[b-1], boundaries[b])."""
    bounds = tuple(int(b) for b in boundaries)
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or (bounds and bounds[0] < 1):
        raise ValueError("boundaries must be strictly increasing positive integers")
    edges = (0,) + bounds + (max(hist.max_count + 1, (bounds[-1] + 1) if bounds else 1),)
    counts = np.zeros(len(edges) - 1)
    for c, k in hist.counts_by_photon_number.items():
        b = np.searchsorted(bounds, c, side="right")
        counts[b] += k
    return BinnedHistogram(bounds, counts, hist.shots)


def _estimate_class_conditionals(
    counts: np.ndarray, weights: np.ndarray, n_iter: int = 400
) -> np.ndarray:
    """EM estimate of per-class count distributions from mixture histograms.

    counts is (histograms, count values), weights (histograms, classes) with
    known mixing proportions.  Returns f with rows summing to one.
    """
    n_hist, n_vals = counts.shape
    n_classes = weights.shape[1]
    f = np.full((n_classes, n_vals), 1.0 / n_vals)
    # bias the start so classes with larger mean bright weight sit at larger counts
    grid = np.linspace(-1.0, 1.0, n_vals)
    for n in range(n_classes):
        f[n] *= 1.0 + 0.5 * grid * (2.0 * n / max(n_classes - 1, 1) - 1.0)
        f[n] /= f[n].sum()
    for _ in range(n_iter):
        mix = weights @ f  # (hist, vals)
        mix = np.clip(mix, 1e-300, None)
        ratio = counts / mix
        f_new = f * (weights.T @ ratio)
        f_new /= np.clip(f_new.sum(axis=1, keepdims=True), 1e-300, None)
        if np.max(np.abs(f_new - f)) < 1e-12:
            f = f_new
            break
        f = f_new
    return f


def _binned_information(f: np.ndarray, priors: np.ndarray, starts: np.ndarray) -> float:
    """Expected log-likelihood ratio between class conditionals and their
    mixture after binning; starts lists the first count of every bin."""
    fb = np.add.reduceat(f, starts, axis=1)
    mix = priors @ fb
    info = 0.0
    for n in range(f.shape[0]):
        mask = fb[n] > 0
        info += priors[n] * np.sum(fb[n, mask] * np.log(fb[n, mask] / np.clip(mix[mask], 1e-300, None)))
    return float(info)


def choose_bins(
    held_out: list[CountHistogram], n_bins: int, n_ions: int = 2, ref_weights: np.ndarray | None = None
) -> tuple[int, ...]:
    """Greedy search for contiguous bin boundaries that lose as little class
    discrimination as possible.

    Class-conditional count distributions are estimated from the held-out
    reference histograms, then interior boundaries are added one at a time,
    each maximizing the retained discrimination information; ties go to the
    lower count value.  The returned boundaries stay fixed for all later
    analysis.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if ref_weights is None:
        ref_weights = reference_weights(n_ions)
    if len(held_out) != ref_weights.shape[0]:
        raise ValueError("one held-out histogram per reference phase is required")
    n_max = max(h.max_count for h in held_out) + 1
    counts = np.stack([h.to_array(n_max) for h in held_out])
    class_counts = counts.sum(axis=1) @ ref_weights
    if np.min(class_counts) < 100:
        raise NumericsError(
            f"held-out data too small: effective class counts {np.round(class_counts, 1)} (need >= 100)"
        )
    f = _estimate_class_conditionals(counts / counts.sum(axis=1, keepdims=True), ref_weights)
    priors = ref_weights.mean(axis=0)
    boundaries: list[int] = []
    for _ in range(n_bins - 1):
        best = (-np.inf, None)
        for cut in range(1, n_max):
            if cut in boundaries:
                continue
            trial = np.array(sorted(boundaries + [cut]))
            edges = np.concatenate(([0], trial))
            info = _binned_information(f, priors, edges)
            if info > best[0] + 1e-15:
                best = (info, cut)
        if best[1] is None:
            break
        boundaries.append(best[1])
    return tuple(sorted(boundaries))


# ---------------------------------------------------------------------------
# measurement design


def _spin_dims(n_ions: int) -> SystemDims:
    return SystemDims(n_ions, 1)


def _global_rotation(n_ions: int, theta: float, phi: float) -> np.ndarray:
    u1 = rotation_2x2(theta, phi)
    u = np.array([[1.0 + 0j]])
    for _ in range(n_ions):
        u = np.kron(u, u1)
    return u


def _bright_projectors(n_ions: int) -> list[np.ndarray]:
    dims = _spin_dims(n_ions)
    projs = [np.zeros((dims.spin_dim, dims.spin_dim), dtype=complex) for _ in range(n_ions + 1)]
    for config in dims.spin_configurations():
        k = sum(1 for s in config if s == UP)
        i = dims.spin_index(config)
        projs[k][i, i] = 1.0
    return projs


def analysis_design(n_ions: int, target: str = "T") -> MeasurementDesign:
    """Rotation set and fidelity certificate for the target state.

    Two ions use pi/2 analysis rotations, three ions use arccos(1/3); both
    add the no-pulse measurement and twenty equally spaced phases.  The
    certificate solves sum_{i,n} alpha_{i,n} U_i^dag A_n U_i = |t><t| by
    least squares; its residual must vanish for the fidelity to be
    measurable, and construction aborts if it does not.
    """
    if target not in ("T", "W"):
        raise ValueError("target must be 'T' or 'W'")
    if (target == "T") != (n_ions == 2):
        raise ValueError("the T target needs 2 ions and the W target 3")
    theta = np.pi / 2.0 if n_ions == 2 else float(np.arccos(1.0 / 3.0))
    rotations = [(0.0, 0.0)] + [(theta, phi) for phi in ANALYSIS_PHASES]
    unitaries = [_global_rotation(n_ions, th, ph) for th, ph in rotations]
    povm = _bright_projectors(n_ions)
    target_vec = named_state(_spin_dims(n_ions), target, 0).amplitudes
    projector = np.outer(target_vec, target_vec.conj())
    ops = [u.conj().T @ a @ u for u in unitaries for a in povm]
    basis = np.stack([np.concatenate([op.real.ravel(), op.imag.ravel()]) for op in ops], axis=1)
    rhs = np.concatenate([projector.real.ravel(), projector.imag.ravel()])
    coeffs, *_ = np.linalg.lstsq(basis, rhs, rcond=None)
    residual = float(np.linalg.norm(basis @ coeffs - rhs))
    if residual > 1e-8:
        raise NumericsError(f"analysis design cannot express the target projector (residual {residual:.2e})")
    return MeasurementDesign(
        n_ions,
        tuple(rotations),
        tuple(unitaries),
        tuple(povm),
        target_vec,
        target,
        coeffs.reshape(len(unitaries), len(povm)),
        residual,
    )


def design_weights(design: MeasurementDesign, rho: np.ndarray) -> np.ndarray:
    """tr(A_n U_i rho U_i^dag) for every rotation i and bright class n."""
    out = np.empty((len(design.unitaries), len(design.povm_elements)))
    for i, u in enumerate(design.unitaries):
        rotated = u @ rho @ u.conj().T
        for n, a in enumerate(design.povm_elements):
            out[i, n] = float(np.real(np.trace(a @ rotated)))
    return np.clip(out, 0.0, None)


# ---------------------------------------------------------------------------
# maximum-likelihood fit


def _log_likelihood(c_ref, w_ref, c_data, w_data, q) -> float:
    p_ref = np.clip(w_ref @ q, 1e-300, None)
    p_data = np.clip(w_data @ q, 1e-300, None)
    return float(np.sum(c_ref * np.log(p_ref)) + np.sum(c_data * np.log(p_data)))


def _q_update(c_all: np.ndarray, w_all: np.ndarray, q: np.ndarray) -> np.ndarray:
    """One EM sweep for the class-conditional bin probabilities."""
    p = np.clip(w_all @ q, 1e-300, None)
    ratio = c_all / p
    q_new = q * (w_all.T @ ratio)
    q_new /= np.clip(q_new.sum(axis=1, keepdims=True), 1e-300, None)
    return q_new


def _transfer_operators(design: MeasurementDesign) -> np.ndarray:
    """Stack of U_i^dag A_n U_i, shape (rotations, classes, s, s)."""
    s = design.povm_elements[0].shape[0]
    out = np.empty((len(design.unitaries), len(design.povm_elements), s, s), dtype=complex)
    for i, u in enumerate(design.unitaries):
        for n, a in enumerate(design.povm_elements):
            out[i, n] = u.conj().T @ a @ u
    return out


def fit_ml(
    references,
    data,
    design: MeasurementDesign,
    boundaries,
    stop: float = 1e-10,
    max_outer: int = 5000,
    ref_weights: np.ndarray | None = None,
    rho_init: np.ndarray | None = None,
) -> TomographyEstimate:
    """Joint maximum-likelihood fit of count distributions and spin state.

    references must follow the standard eight-phase protocol order (or
    supply ref_weights); data must be ordered like design.analysis_rotations
    (the no-pulse measurement first).  Alternates EM updates of the binned
    class probabilities with R rho R updates of the density matrix, keeping
    the joint likelihood non-decreasing, until the relative gain drops below
    stop.  Returns the estimate flagged unconverged if max_outer is hit.
    """
    references = tuple(references)
    data = tuple(data)
    if ref_weights is None:
        ref_weights = reference_weights(design.n_ions)
    if len(references) != ref_weights.shape[0]:
        raise ValueError("reference histogram count does not match the weight table")
    if len(data) != len(design.unitaries):
        raise ValueError(f"expected {len(design.unitaries)} data histograms, got {len(data)}")
    if any(h.shots == 0 for h in references + data):
        raise ValueError("empty histogram supplied")
    boundaries = tuple(boundaries)
    c_ref = np.stack([rebin(h, boundaries).bin_counts for h in references])
    c_data = np.stack([rebin(h, boundaries).bin_counts for h in data])
    n_bins = len(boundaries) + 1
    n_classes = design.n_ions + 1
    transfer = _transfer_operators(design)
    s = transfer.shape[-1]

    def weights_of(rho_):
        return np.clip(np.einsum("inab,ba->in", transfer, rho_).real, 0.0, None)

    rho = np.eye(s, dtype=complex) / s if rho_init is None else np.asarray(rho_init, dtype=complex)
    q = np.full((n_classes, n_bins), 1.0 / n_bins)
    # nudge classes apart so EM does not start on the symmetric saddle
    tilt = np.linspace(-0.5, 0.5, n_bins)
    for n in range(n_classes):
        q[n] *= 1.0 + tilt * (2.0 * n / max(n_classes - 1, 1) - 1.0)
        q[n] /= q[n].sum()

    c_all = np.vstack([c_ref, c_data])
    data_shots = c_data.sum()
    loglik = []
    w_data = weights_of(rho)
    ll = _log_likelihood(c_ref, ref_weights, c_data, w_data, q)
    converged = False
    for it in range(max_outer):
        # (a) class probabilities given the state
        w_all = np.vstack([ref_weights, w_data])
        for _ in range(3):
            q = _q_update(c_all, w_all, q)
        ll_q = _log_likelihood(c_ref, ref_weights, c_data, w_data, q)
        # (b) R rho R step given the class probabilities
        p_data = np.clip(w_data @ q, 1e-300, None)
        coeff = (c_data / p_data) @ q.T  # (rotations, classes)
        r = np.einsum("in,inab->ab", coeff, transfer) / max(data_shots, 1.0)
        candidate = r @ rho @ r
        candidate /= np.trace(candidate).real
        w_cand = weights_of(candidate)
        ll_cand = _log_likelihood(c_ref, ref_weights, c_data, w_cand, q)
        if ll_cand < ll_q:
            # diluted step keeps monotonicity when the plain update overshoots
            r_mix = 0.5 * (r + np.eye(s))
            candidate = r_mix @ rho @ r_mix
            candidate /= np.trace(candidate).real
            w_cand = weights_of(candidate)
            ll_cand = _log_likelihood(c_ref, ref_weights, c_data, w_cand, q)
            if ll_cand < ll_q:
                candidate, w_cand, ll_cand = rho, w_data, ll_q
        rho, w_data = candidate, w_cand
        rho = 0.5 * (rho + rho.conj().T)
        loglik.append(ll_cand)
        if ll_cand - ll < stop * max(abs(ll), 1.0) and it > 2:
            converged = True
            ll = ll_cand
            break
        ll = ll_cand
    fidelity = float(np.real(design.target @ rho @ design.target.conj()))
    populations = np.array([float(np.real(np.trace(a @ rho))) for a in design.povm_elements])
    return TomographyEstimate(
        rho_ml=rho,
        fidelity=fidelity,
        populations=populations,
        target_name=design.target_name,
        converged=converged,
        n_iterations=len(loglik),
        log_likelihoods=np.array(loglik),
    )


# ---------------------------------------------------------------------------
# uncertainty


def _model_bin_probabilities(inputs: FitInputs, estimate: TomographyEstimate, ref_weights):
    q = _refit_q_only(inputs, estimate, ref_weights)
    w_data = design_weights(inputs.design, estimate.rho_ml)
    return ref_weights @ q, w_data @ q, q


def _refit_q_only(inputs: FitInputs, estimate: TomographyEstimate, ref_weights) -> np.ndarray:
    """Class probabilities at the fitted state (EM to convergence)."""
    c_ref = np.stack([rebin(h, inputs.boundaries).bin_counts for h in inputs.references])
    c_data = np.stack([rebin(h, inputs.boundaries).bin_counts for h in inputs.data])
    w_data = design_weights(inputs.design, estimate.rho_ml)
    w_all = np.vstack([ref_weights, w_data])
    c_all = np.vstack([c_ref, c_data])
    n_bins = len(inputs.boundaries) + 1
    q = np.full((inputs.design.n_ions + 1, n_bins), 1.0 / n_bins)
    tilt = np.linspace(-0.5, 0.5, n_bins)
    for n in range(inputs.design.n_ions + 1):
        q[n] *= 1.0 + tilt * (2.0 * n / inputs.design.n_ions - 1.0)
        q[n] /= q[n].sum()
    for _ in range(2000):
        q_new = _q_update(c_all, w_all, q)
        if np.max(np.abs(q_new - q)) < 1e-13:
            return q_new
        q = q_new
    return q


def _log_likelihood_ratio(c: np.ndarray, p: np.ndarray) -> float:
    """2 sum c log(c / (shots p)) against the saturated model."""
    shots = c.sum(axis=1, keepdims=True)
    expected = np.clip(shots * p, 1e-300, None)
    mask = c > 0
    return float(2.0 * np.sum(c[mask] * np.log(c[mask] / expected[mask])))


def _fit_from_binned(inputs: FitInputs, c_ref, c_data, ref_weights, rho_init=None) -> TomographyEstimate:
    """fit_ml driven directly by binned counts (bootstrap path)."""
    refs = [_binned_as_histogram(row, inputs.boundaries, f"boot_ref_{i}") for i, row in enumerate(c_ref)]
    data = [_binned_as_histogram(row, inputs.boundaries, f"boot_data_{i}") for i, row in enumerate(c_data)]
    return fit_ml(
        refs, data, inputs.design, inputs.boundaries, inputs.stop, inputs.max_outer, ref_weights, rho_init
    )


def _binned_as_histogram(bin_counts, boundaries, label) -> CountHistogram:
    """Represent binned counts as a histogram putting each bin's counts on
    its left edge; rebinning with the same boundaries recovers the bins."""
    edges = (0,) + tuple(boundaries)
    counts = {int(edges[b]): int(k) for b, k in enumerate(bin_counts) if k > 0}
    return CountHistogram(counts, int(np.sum(bin_counts)), label)


def bootstrap(
    inputs: FitInputs,
    estimate: TomographyEstimate,
    resamples: int = 500,
    seed: int = 0,
) -> TomographyEstimate:
    """Parametric bootstrap interval and model-fit percentile.

    Every histogram is regenerated from the fitted model (multinomial over
    the frozen bins), refit, and the 0.16 / 0.84 fidelity quantiles give the
    half width eps0.  The interval is (F - eps0 - eps_syst, F + eps0), using
    whatever epsilon_syst the estimate already carries.  The log-likelihood
    ratio of the original fit is ranked inside the bootstrap distribution as
    a goodness-of-fit percentile.  Per-resample seeds come from a spawned
    sequence, so results do not depend on evaluation order.
    """
    if resamples == 0:
        return estimate
    ref_weights = inputs.ref_weights if inputs.ref_weights is not None else reference_weights(inputs.design.n_ions)
    p_ref, p_data, _ = _model_bin_probabilities(inputs, estimate, ref_weights)
    c_ref = np.stack([rebin(h, inputs.boundaries).bin_counts for h in inputs.references])
    c_data = np.stack([rebin(h, inputs.boundaries).bin_counts for h in inputs.data])
    shots_ref = c_ref.sum(axis=1).astype(int)
    shots_data = c_data.sum(axis=1).astype(int)
    ll_orig = _log_likelihood_ratio(np.vstack([c_ref, c_data]), np.vstack([p_ref, p_data]))

    children = np.random.SeedSequence(seed).spawn(resamples)
    fids = np.empty(resamples)
    llrs = np.empty(resamples)
    s_dim = estimate.rho_ml.shape[0]
    warm = 0.9 * estimate.rho_ml + 0.1 * np.eye(s_dim) / s_dim  # full-rank warm start
    for k in range(resamples):
        rng = np.random.default_rng(children[k])
        for attempt in range(3):
            try:
                b_ref = np.stack([rng.multinomial(s, np.clip(p, 0, None) / np.clip(p, 0, None).sum()) for s, p in zip(shots_ref, p_ref)])
                b_data = np.stack([rng.multinomial(s, np.clip(p, 0, None) / np.clip(p, 0, None).sum()) for s, p in zip(shots_data, p_data)])
                fit_k = _fit_from_binned(inputs, b_ref, b_data, ref_weights, rho_init=warm)
                pk_ref, pk_data, _ = _model_bin_probabilities(inputs, fit_k, ref_weights)
                fids[k] = fit_k.fidelity
                llrs[k] = _log_likelihood_ratio(np.vstack([b_ref, b_data]), np.vstack([pk_ref, pk_data]))
                break
            except (ConvergenceError, NumericsError, ValueError):
                if attempt == 2:
                    raise ConvergenceError(f"bootstrap resample {k} failed to fit after 3 draws")
    lo, hi = np.quantile(fids, [0.16, 0.84])
    eps0 = float(hi - lo) / 2.0
    percentile = float(100.0 * np.mean(llrs < ll_orig))
    return dataclasses.replace(
        estimate,
        ci_lower=estimate.fidelity - eps0 - estimate.epsilon_syst,
        ci_upper=estimate.fidelity + eps0,
        epsilon_boot=eps0,
        lr_percentile=percentile,
    )


@dataclass(frozen=True)
class SystematicSweepResult:
    slope: float
    epsilon_syst: float
    epsilons: np.ndarray
    infidelities: np.ndarray
    linear: bool


def systematic_sweep(
    inputs: FitInputs,
    epsilon_range: tuple[float, float] = (0.0, 0.002),
    n_points: int = 5,
    epsilon_max: float = 0.001,
) -> SystematicSweepResult:
    """Sensitivity of the inferred fidelity to reference preparation error.

    Refits the same data while assuming each reference ion starts in the
    wrong state with probability epsilon (binomial mixing of the reference
    weights).  A line through inferred infidelity versus epsilon gives the
    slope c; the systematic term is |c| * epsilon_max.  The result is
    flagged non-linear when the points stray more than 20% of the swept
    response from the line.
    """
    eps_grid = np.linspace(epsilon_range[0], epsilon_range[1], n_points)
    infids = np.empty(n_points)
    for i, eps in enumerate(eps_grid):
        w = reference_weights(inputs.design.n_ions, eps)
        fit = fit_ml(
            inputs.references, inputs.data, inputs.design, inputs.boundaries, inputs.stop, inputs.max_outer, w
        )
        infids[i] = 1.0 - fit.fidelity
    slope, intercept = np.polyfit(eps_grid, infids, 1)
    line = slope * eps_grid + intercept
    span = max(infids.max() - infids.min(), 1e-12)
    linear = bool(np.max(np.abs(infids - line)) <= 0.2 * span)
    return SystematicSweepResult(float(slope), float(abs(slope) * epsilon_max), eps_grid, infids, linear)


# ---------------------------------------------------------------------------
# histogram files


def write_histogram(path, hist: CountHistogram) -> None:
    """Plain-text histogram: header lines with shots and label, then one
    "<count> <occurrences>" line per photon number."""
    with open(path, "w") as fh:
        fh.write(f"# shots={hist.shots}\n")
        fh.write(f"# label={hist.label}\n")
        for count in sorted(hist.counts_by_photon_number):
            fh.write(f"{count} {hist.counts_by_photon_number[count]}\n")


def read_histogram(path) -> CountHistogram:
    shots = None
    label = ""
    counts: dict[int, int] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("shots="):
                    shots = int(body[len("shots="):])
                elif body.startswith("label="):
                    label = body[len("label="):]
                continue
            c, k = line.split()
            counts[int(c)] = int(k)
    if shots is None:
        shots = sum(counts.values())
    return CountHistogram(counts, shots, label)
