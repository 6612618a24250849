import numpy as np
import pytest

from zenosim.errors import NumericsError
from zenosim.hilbert import SystemDims, named_state
from zenosim.tomography import (
    CountHistogram,
    DetectionModel,
    FitInputs,
    analysis_design,
    binomial_weights,
    bootstrap,
    choose_bins,
    design_weights,
    fit_ml,
    read_histogram,
    rebin,
    reference_bright_probability,
    reference_protocol,
    reference_shot_counts,
    reference_weights,
    simulate_histogram,
    split_reference_shots,
    systematic_sweep,
    two_ion_detection,
    write_histogram,
)

MODEL = two_ion_detection()


def spin_vector(n_ions, name):
    return named_state(SystemDims(n_ions, 1), name, 0).amplitudes


def make_synthetic(rho, design, model=MODEL, shots_data=30000, shots_analysis=1500, seed=77):
    w = design_weights(design, rho)
    children = np.random.SeedSequence(seed).spawn(len(design.unitaries))
    return [
        simulate_histogram(
            w[i], model, shots_data if i == 0 else shots_analysis, np.random.default_rng(children[i]), f"data_{i}"
        )
        for i in range(len(design.unitaries))
    ]


@pytest.fixture(scope="module")
def two_ion_setup():
    raw = reference_shot_counts(MODEL, 6000, 2, seed=11)
    held, refs = split_reference_shots(raw)
    boundaries = choose_bins(held, 5, n_ions=2)
    design = analysis_design(2, "T")
    return refs, held, boundaries, design


def test_histogram_mean_scales_with_bright_ions():
    hist = simulate_histogram([0, 0, 1], DetectionModel(39.0, 3.0, pump_prob=0.0), 4000, seed=1)
    samples = np.concatenate([[c] * k for c, k in hist.counts_by_photon_number.items()])
    assert abs(samples.mean() - 78.0) < 3 * np.sqrt(78.0 / 4000) * 3
    dark = simulate_histogram([1, 0, 0], DetectionModel(39.0, 3.0, pump_prob=0.0), 4000, seed=2)
    samples = np.concatenate([[c] * k for c, k in dark.counts_by_photon_number.items()])
    assert abs(samples.mean() - 6.0) < 0.5


def test_histogram_determinism():
    a = simulate_histogram([0.3, 0.4, 0.3], MODEL, 3000, seed=42)
    b = simulate_histogram([0.3, 0.4, 0.3], MODEL, 3000, seed=42)
    assert a.counts_by_photon_number == b.counts_by_photon_number


def test_reference_sequence_compositions():
    # oracle: compose the 2x2 rotations directly
    assert abs(reference_bright_probability(0.0) - 1.0) < 1e-12  # net 2 pi rotation
    assert reference_bright_probability(np.pi) < 1e-12  # net pi rotation
    assert abs(reference_bright_probability(np.pi / 2) - 0.5) < 1e-12
    w = reference_weights(2)
    assert np.allclose(w[2], [0.25, 0.5, 0.25], atol=1e-12)  # phase pi/2 row
    assert np.allclose(w[0], [0.0, 0.0, 1.0], atol=1e-12)


def test_reference_protocol_labels_and_split():
    refs = reference_protocol(MODEL, 600, 2, seed=4)
    assert len(refs) == 8
    assert all(h.shots == 600 for h in refs)
    raw = reference_shot_counts(MODEL, 600, 2, seed=4)
    held, main = split_reference_shots(raw)
    assert all(h.shots == 60 for h in held)
    assert all(h.shots == 540 for h in main)


def test_choose_bins_topology(two_ion_setup):
    refs, held, boundaries, design = two_ion_setup
    assert len(boundaries) == 4
    three = choose_bins(held, 3, n_ions=2)
    # one cut between dark (~6) and one-bright (~42), one between one- and
    # two-bright (~78)
    assert 8 < three[0] < 35
    assert 45 < three[1] < 72
    # identity binning keeps every count separate
    tiny = [CountHistogram({0: 50, 1: 60, 2: 40}, 150, "t") for _ in range(8)]
    full = choose_bins(tiny, 3, n_ions=2)
    assert full == (1, 2)


def test_choose_bins_insufficient_data():
    raw = reference_shot_counts(MODEL, 100, 2, seed=5)
    held, _ = split_reference_shots(raw)
    with pytest.raises(NumericsError):
        choose_bins(held, 5, n_ions=2)


def test_rebin_contract():
    hist = CountHistogram({0: 5, 10: 5, 20: 10}, 20, "x")
    binned = rebin(hist, (10, 15))
    assert binned.bin_counts.tolist() == [5, 5, 10]
    assert binned.shots == 20
    with pytest.raises(ValueError):
        rebin(hist, (15, 10))


def test_design_residuals_and_invariance():
    d2 = analysis_design(2, "T")
    assert d2.residual < 1e-10
    d3 = analysis_design(3, "W")
    assert d3.residual < 1e-10
    # the singlet is invariant under every analysis rotation
    s = spin_vector(2, "S")
    w = design_weights(d2, np.outer(s, s.conj()))
    assert np.max(np.ptp(w[1:], axis=0)) < 1e-12
    # the twisted three-ion states keep 2/3 of their weight at two bright
    for name in ("Wc", "Wac"):
        v = spin_vector(3, name)
        w3 = design_weights(d3, np.outer(v, v.conj()))
        assert np.allclose(w3[1:, 2], 2.0 / 3.0, atol=1e-12)
    with pytest.raises(ValueError):
        analysis_design(2, "W")


def test_fidelity_functional_exactness():
    rng = np.random.default_rng(8)
    design = analysis_design(2, "T")
    t = spin_vector(2, "T")
    for _ in range(100):
        g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        rho = g @ g.conj().T
        rho /= np.trace(rho).real
        w = design_weights(design, rho)
        combo = float(np.sum(design.fidelity_coefficients * w))
        direct = float(np.real(t @ rho @ t.conj()))
        assert abs(combo - direct) < 1e-9


def test_round_trip_triplet(two_ion_setup):
    refs, _, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    data = make_synthetic(np.outer(t, t.conj()), design)
    est = fit_ml(refs, data, design, boundaries)
    assert est.converged
    assert abs(est.fidelity - 1.0) < 0.005
    assert np.all(np.diff(est.log_likelihoods) >= -1e-7)
    # the estimate stays physical
    eigs = np.linalg.eigvalsh(est.rho_ml)
    assert eigs.min() > -1e-9
    assert abs(np.trace(est.rho_ml).real - 1.0) < 1e-9
    assert np.linalg.norm(est.rho_ml - est.rho_ml.conj().T) < 1e-12


def test_round_trip_maximally_mixed(two_ion_setup):
    refs, _, boundaries, design = two_ion_setup
    data = make_synthetic(np.eye(4) / 4.0, design, seed=78)
    est = fit_ml(refs, data, design, boundaries)
    assert abs(est.fidelity - 0.25) < 0.01
    assert abs(est.populations[1] - 0.5) < 0.02


def test_binning_sufficiency(two_ion_setup):
    """Five bins lose almost nothing against full count resolution."""
    refs, held, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    rho = 0.95 * np.outer(t, t.conj()) + 0.05 * np.eye(4) / 4
    data = make_synthetic(rho, design, seed=99)
    est5 = fit_ml(refs, data, design, boundaries)
    max_count = max(h.max_count for h in list(refs) + list(data))
    est_full = fit_ml(refs, data, design, tuple(range(1, max_count + 1)))
    assert abs(est5.fidelity - est_full.fidelity) < 0.003


def test_fit_input_validation(two_ion_setup):
    refs, _, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    data = make_synthetic(np.outer(t, t.conj()), design)
    with pytest.raises(ValueError):
        fit_ml(refs[:5], data, design, boundaries)
    with pytest.raises(ValueError):
        fit_ml(refs, data[:3], design, boundaries)
    empty = CountHistogram({}, 0, "empty")
    with pytest.raises(ValueError):
        fit_ml(refs, [empty] * len(data), design, boundaries)


def test_bootstrap_interval_and_determinism(two_ion_setup):
    refs, _, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    data = make_synthetic(np.outer(t, t.conj()), design)
    est = fit_ml(refs, data, design, boundaries)
    inputs = FitInputs(tuple(refs), tuple(data), design, boundaries)
    assert bootstrap(inputs, est, resamples=0) is est
    b1 = bootstrap(inputs, est, resamples=40, seed=9)
    b2 = bootstrap(inputs, est, resamples=40, seed=9)
    assert b1.epsilon_boot == b2.epsilon_boot
    assert b1.lr_percentile == b2.lr_percentile
    assert 1e-4 < b1.epsilon_boot < 1e-2
    assert b1.ci_lower <= est.fidelity <= b1.ci_upper


def test_bootstrap_coverage(two_ion_setup):
    """Over repeated synthetic datasets with known fidelity, the 68%
    interval contains the truth at least half the time."""
    refs, _, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    rho = 0.9 * np.outer(t, t.conj()) + 0.1 * np.eye(4) / 4
    f_true = float(np.real(t @ rho @ t.conj()))
    hits = 0
    for trial in range(20):
        data = make_synthetic(rho, design, shots_data=8000, shots_analysis=500, seed=1000 + trial)
        est = fit_ml(refs, data, design, boundaries)
        inputs = FitInputs(tuple(refs), tuple(data), design, boundaries)
        est = bootstrap(inputs, est, resamples=60, seed=2000 + trial)
        if est.ci_lower <= f_true <= est.ci_upper:
            hits += 1
    assert hits >= 10


def test_systematic_sweep(two_ion_setup):
    refs, _, boundaries, design = two_ion_setup
    t = spin_vector(2, "T")
    data = make_synthetic(np.outer(t, t.conj()), design)
    inputs = FitInputs(tuple(refs), tuple(data), design, boundaries)
    baseline = fit_ml(refs, data, design, boundaries)
    sweep = systematic_sweep(inputs, n_points=5)
    # epsilon = 0 point reproduces the baseline fit exactly
    assert abs((1.0 - baseline.fidelity) - sweep.infidelities[0]) < 1e-12
    # an O(1) slope puts the systematic term at the few-1e-3 scale
    assert 0.3 < abs(sweep.slope) < 5.0
    assert 3e-4 < sweep.epsilon_syst < 5e-3
    assert sweep.linear


def test_histogram_file_round_trip(tmp_path):
    hist = simulate_histogram([0.2, 0.5, 0.3], MODEL, 2000, seed=3, label="demo phase=0.3")
    path = tmp_path / "hist.txt"
    write_histogram(path, hist)
    back = read_histogram(path)
    assert back.counts_by_photon_number == hist.counts_by_photon_number
    assert back.shots == hist.shots
    assert back.label == hist.label
    text = path.read_text().splitlines()
    assert text[0] == "# shots=2000"
    assert text[1] == "# label=demo phase=0.3"


def test_binomial_weights_sum():
    rng = np.random.default_rng(0)
    for _ in range(5):
        p = rng.uniform(0, 1)
        for n in (2, 3):
            w = binomial_weights(p, n)
            assert abs(w.sum() - 1.0) < 1e-12
