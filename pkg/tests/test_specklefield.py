import math

import numpy as np
import pytest
from scipy import stats

from ghostspeckle.errors import AnalysisError, ConfigurationError, DomainError
from ghostspeckle.photostatistics import SourceSpec, estimate_g2, g2_case_a, sample_intensity
from ghostspeckle.specklefield import (
    FWHM_AREA_FACTOR,
    Frame,
    FrameEnsemble,
    GridSpec,
    PinholeSpec,
    ScattererCloud,
    apply_pinhole,
    coherence_area,
    frame_seed,
    generate_ensemble,
    intensity_covariance,
    measure_speckle_area,
    pinhole_for_modes,
    pinhole_mode_count,
    scatter_speckled_speckle,
    second_harmonic,
    synthesize_thermal_frame,
    thermal_field,
)


def pixel_g2(frames, margin=0):
    """Single-pixel g2 pooled over the frame: mean over pixels of <I^2>/<I>^2."""
    if margin:
        frames = frames[:, margin:-margin, margin:-margin]
    m1 = frames.mean(axis=0)
    m2 = (frames**2).mean(axis=0)
    return float(np.mean(m2 / m1**2))


# --- grid and frame types ----------------------------------------------------------

def test_grid_defaults_and_geometry():
    g = GridSpec()
    assert (g.width, g.height, g.shape, g.center) == (200, 200, (200, 200), (100, 100))
    assert GridSpec(10, 6, speckle_radius=1).shape == (6, 10)


@pytest.mark.parametrize("kwargs", [
    dict(width=0), dict(width=1, height=3), dict(speckle_radius=0.4), dict(speckle_radius=50.1),
    dict(pixel_pitch=0), dict(width=2.5),
])
def test_grid_validation(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


def test_speckle_radius_cap_is_quarter_of_smaller_side():
    GridSpec(40, 80, speckle_radius=10.0)
    with pytest.raises(DomainError):
        GridSpec(40, 80, speckle_radius=10.01)


def test_frame_validation_and_read_only():
    g = GridSpec(8, 8, speckle_radius=1)
    f = Frame(g, np.ones((8, 8)), 0)
    with pytest.raises(ValueError):
        f.intensity[0, 0] = 2.0
    for bad in (np.ones((8, 7)), -np.ones((8, 8)), np.full((8, 8), np.nan)):
        with pytest.raises(DomainError):
            Frame(g, bad, 0)
    with pytest.raises(DomainError):
        Frame(g, np.ones((8, 8)), -1)


# --- thermal frames ------------------------------------------------------------------

def test_thermal_frame_is_deterministic():
    g = GridSpec(32, 32, speckle_radius=2)
    a = synthesize_thermal_frame(g, 1.0, 123)
    b = synthesize_thermal_frame(g, 1.0, 123)
    assert np.array_equal(a.intensity, b.intensity)
    assert not np.array_equal(a.intensity, synthesize_thermal_frame(g, 1.0, 124).intensity)


def test_thermal_frame_validation():
    g = GridSpec(16, 16, speckle_radius=1)
    with pytest.raises(DomainError):
        synthesize_thermal_frame(g, 0.0, 1)
    with pytest.raises(DomainError):
        synthesize_thermal_frame(g, 1.0, 1, modes=0)
    with pytest.raises(ConfigurationError):
        synthesize_thermal_frame(g, 1.0, 1, modes=1.5)


def test_thermal_field_is_circular_gaussian_with_unit_power():
    g = GridSpec(64, 64, speckle_radius=2)
    rng = np.random.default_rng(3)
    fields = np.stack([thermal_field(g, rng) for _ in range(200)])
    assert np.mean(np.abs(fields) ** 2) == pytest.approx(1.0, rel=0.03)
    assert abs(np.mean(fields**2)) < 0.02  # pseudo-covariance vanishes
    assert np.mean(fields.real**2) == pytest.approx(np.mean(fields.imag**2), rel=0.05)


def test_thermal_ensemble_mean_and_g2():
    g = GridSpec(200, 200, speckle_radius=4)
    frames = generate_ensemble(SourceSpec.thermal(2.5), g, 400, 8).materialize()
    assert frames.mean() == pytest.approx(2.5, rel=0.01)
    assert pixel_g2(frames) == pytest.approx(2.0, abs=0.1)


def test_thermal_single_pixel_histogram_is_exponential():
    g = GridSpec(32, 32, speckle_radius=1.5)
    frames = generate_ensemble(SourceSpec.thermal(), g, 4000, 21).materialize()
    # pixels 16 apart are independent
    vals = frames[:, ::16, ::16].ravel()
    assert stats.kstest(vals, "expon").pvalue > 0.001


def test_intensity_covariance_matches_gaussian_coherence():
    g = GridSpec(64, 64, speckle_radius=3)
    cov = intensity_covariance(g)
    assert cov[0, 0] == pytest.approx(1.0)
    d = np.arange(10)
    np.testing.assert_allclose(cov[0, :10], np.exp(-d**2 / (2 * 9.0)), atol=1e-9)
    assert coherence_area(g) == pytest.approx(2 * math.pi * 9.0, rel=1e-6)


def test_measured_covariance_matches_analytic():
    g = GridSpec(64, 64, speckle_radius=2)
    frames = generate_ensemble(SourceSpec.thermal(), g, 1500, 4).materialize()
    x = frames - frames.mean()
    for lag in (0, 1, 2, 3, 5, 8):
        emp = np.mean(x * np.roll(x, lag, axis=2)) / np.mean(x * x)
        assert emp == pytest.approx(intensity_covariance(g)[0, lag], abs=0.02)


@pytest.mark.parametrize("modes", [1, 2, 5])
def test_mode_sum_gives_gamma_statistics(modes):
    g = GridSpec(48, 48, speckle_radius=2)
    frames = np.stack([synthesize_thermal_frame(g, 1.0, s, modes=modes).intensity for s in range(1500)])
    assert pixel_g2(frames) == pytest.approx(1 + 1 / modes, abs=0.05)


def test_stationarity_of_mean_intensity():
    g = GridSpec(60, 60, speckle_radius=2)
    frames = generate_ensemble(SourceSpec.thermal(), g, 3000, 17).materialize()
    m = 6  # 3 sigma border
    inner = frames[:, m:-m, m:-m]
    blocks = inner.reshape(len(inner), 3, 16, 3, 16).mean(axis=(2, 4)).reshape(len(inner), 9)
    overall = inner.mean()
    z = (blocks.mean(axis=0) - overall) / (blocks.std(axis=0, ddof=1) / math.sqrt(len(inner)))
    assert np.all(np.abs(z) <= 3)


# --- pinhole ----------------------------------------------------------------------

def test_pinhole_validation():
    g = GridSpec(32, 32, speckle_radius=2)
    PinholeSpec((16, 16), 0.5)
    with pytest.raises(DomainError):
        PinholeSpec((16, 16), 0.4)
    with pytest.raises(DomainError):
        PinholeSpec((2, 16), 4.0).pixels(g)


def test_single_pixel_pinhole_has_one_mode():
    g = GridSpec(32, 32, speckle_radius=2)
    ph = PinholeSpec((16, 16), 0.5)
    assert ph.pixels(g).sum() == 1
    assert pinhole_mode_count(g, ph) == pytest.approx(1.0)


def test_apply_pinhole_zeroes_outside_keeps_inside():
    g = GridSpec(32, 32, speckle_radius=2)
    field = thermal_field(g, np.random.default_rng(0))
    ph = PinholeSpec((15, 17), 4.0)
    out = apply_pinhole(field, ph, g)
    assert np.all(out.field[~out.mask] == 0)
    assert np.array_equal(out.field[out.mask], field[out.mask])


def test_pinhole_radius_sigma_is_about_one_mode():
    g = GridSpec(64, 64, speckle_radius=3)
    mu = apply_pinhole(np.ones(g.shape, complex), PinholeSpec(g.center, 3.0), g).mu_eff
    area = PinholeSpec(g.center, 3.0).pixels(g).sum()
    assert 0.5 < mu < 2.0
    assert area / (FWHM_AREA_FACTOR * 9) == pytest.approx(mu, rel=0.6)


def test_large_pinhole_counts_coherence_areas():
    g = GridSpec(128, 128, speckle_radius=2)
    ph = PinholeSpec((63.5, 63.5), 64.0)
    mask = ph.pixels(g)
    mu = apply_pinhole(np.ones(g.shape, complex), ph, g).mu_eff
    assert mu == pytest.approx(mask.sum() / coherence_area(g), rel=0.1)


@pytest.mark.parametrize("mu", [1, 2, 5, 12])
def test_pinhole_for_modes_is_close(mu):
    g = GridSpec(64, 64, speckle_radius=2)
    ph = pinhole_for_modes(g, mu)
    assert pinhole_mode_count(g, ph) == pytest.approx(mu, rel=0.25)


# --- case A ------------------------------------------------------------------------

def test_scatterer_cloud():
    cloud = ScattererCloud.draw(np.random.default_rng(1))
    assert cloud.count == 100 and cloud.positions.shape == (100, 3)
    assert np.all((cloud.positions[:, 2] >= 0) & (cloud.positions[:, 2] < 100))
    with pytest.raises(DomainError):
        ScattererCloud(0, np.zeros((0, 3)))
    with pytest.raises(DomainError):
        ScattererCloud(1, [[0, np.inf, 0]])


def test_scatter_rejects_dark_pinhole():
    g = GridSpec(16, 16, speckle_radius=1)
    cloud = ScattererCloud.draw(np.random.default_rng(1))
    with pytest.raises(DomainError):
        scatter_speckled_speckle(np.zeros(g.shape, complex), cloud, g, 0)


def test_coherent_input_gives_thermal_statistics():
    g = GridSpec(32, 32, speckle_radius=2)
    pin = apply_pinhole(np.ones(g.shape, complex), PinholeSpec(g.center, 3.0), g)
    rng = np.random.default_rng(5)
    frames = np.stack([
        scatter_speckled_speckle(pin, ScattererCloud.draw(rng), g, s).intensity for s in range(3000)
    ])
    assert pixel_g2(frames) == pytest.approx(2.0, abs=0.1)
    assert frames.mean() == pytest.approx(1.0, rel=0.05)


def test_case_a_single_mode_g2_is_four():
    g = GridSpec(32, 32, speckle_radius=2)
    frames = generate_ensemble(SourceSpec.case_a(mu_f=1, mu_s=1), g, 10_000, 77).materialize()
    assert pixel_g2(frames) == pytest.approx(4.0, abs=0.2)
    assert frames.mean() == pytest.approx(1.0, rel=0.05)


def test_case_a_many_fundamental_modes():
    g = GridSpec(64, 64, speckle_radius=1.5)
    spec = SourceSpec.case_a(mu_f=20, mu_s=1)
    mu_eff = pinhole_mode_count(g, pinhole_for_modes(g, 20))
    frames = generate_ensemble(spec, g, 3000, 78).materialize()
    assert pixel_g2(frames) == pytest.approx(2 + 2 / mu_eff, abs=0.1)


@pytest.mark.parametrize("mu_s", [2, 5])
def test_case_a_scattering_modes(mu_s):
    g = GridSpec(32, 32, speckle_radius=2)
    frames = generate_ensemble(SourceSpec.case_a(mu_f=1, mu_s=mu_s), g, 6000, 79).materialize()
    assert pixel_g2(frames) == pytest.approx(g2_case_a(1, mu_s), abs=0.15)


def test_case_a_field_requires_integer_scattering_modes():
    with pytest.raises(ConfigurationError):
        generate_ensemble(SourceSpec.case_a(mu_s=1.5), GridSpec(16, 16, speckle_radius=1), 2, 0)


# --- case B ------------------------------------------------------------------------

def test_second_harmonic_pointwise():
    g = GridSpec(4, 4, speckle_radius=0.5)
    f = Frame(g, np.full((4, 4), 3.0), 2)
    out = second_harmonic(f, 0.5)
    assert np.all(out.intensity == 4.5) and out.frame_index == 2 and out.grid == g
    assert np.all(second_harmonic(Frame(g, np.zeros((4, 4)), 0), 1.0).intensity == 0)
    with pytest.raises(DomainError):
        second_harmonic(f, 0.0)


def test_squared_thermal_g2_is_six():
    g = GridSpec(64, 64, speckle_radius=2)
    frames = np.stack([second_harmonic(synthesize_thermal_frame(g, 1.0, s), 1.0).intensity for s in range(3000)])
    assert pixel_g2(frames) == pytest.approx(6.0, abs=0.5)


@pytest.mark.parametrize("mu", [1, 3])
def test_case_b_histogram_matches_sampler(mu):
    spec = SourceSpec.case_b(mean_fund=1.0, mu=mu, k=0.8)
    g = GridSpec(32, 32, speckle_radius=1.5)
    frames = generate_ensemble(spec, g, 5000, 31 + mu).materialize()
    field_vals = frames[:, ::16, ::16].ravel()
    sampled = sample_intensity(spec, field_vals.size, 5).values
    edges = np.concatenate([[0], np.quantile(sampled, np.linspace(0.05, 0.95, 19)), [np.inf]])
    table = np.stack([np.histogram(field_vals, edges)[0], np.histogram(sampled, edges)[0]])
    assert stats.chi2_contingency(table)[1] > 0.001


# --- ensembles -------------------------------------------------------------------

def test_frame_seeds_are_distinct_and_pure():
    seeds = [frame_seed(5, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert frame_seed(5, 10) == seeds[10]
    assert frame_seed(2**64 + 5, 10) == seeds[10]


@pytest.mark.parametrize("spec", [SourceSpec.thermal(), SourceSpec.case_a(mu_f=2, mu_s=2), SourceSpec.case_b(mu=2)])
def test_ensemble_independent_of_threads_and_order(spec):
    g = GridSpec(24, 24, speckle_radius=1.5)
    seq = generate_ensemble(spec, g, 150, 9, threads=1).materialize()
    par = generate_ensemble(spec, g, 150, 9, threads=4).materialize()
    assert np.array_equal(seq, par)
    ens = generate_ensemble(spec, g, 150, 9)
    for i in (149, 3, 77):
        assert np.array_equal(ens.frame(i).intensity, seq[i])
    assert np.array_equal(np.stack([f.intensity for f in ens]), seq)


@pytest.mark.parametrize("spec", [SourceSpec.thermal(), SourceSpec.case_a(), SourceSpec.case_b()])
def test_single_frame_ensemble(spec):
    ens = generate_ensemble(spec, GridSpec(16, 16, speckle_radius=1), 1, 0)
    frames = list(ens)
    assert len(frames) == 1 and frames[0].frame_index == 0
    assert np.all(frames[0].intensity >= 0)


def test_ensemble_validation():
    g = GridSpec(16, 16, speckle_radius=1)
    with pytest.raises(DomainError):
        generate_ensemble(SourceSpec.thermal(), g, 0, 0)
    with pytest.raises(IndexError):
        generate_ensemble(SourceSpec.thermal(), g, 3, 0).frame(3)


def test_frame_errors_carry_index(monkeypatch):
    import ghostspeckle.specklefield as sf

    g = GridSpec(16, 16, speckle_radius=1)
    ens = generate_ensemble(SourceSpec.thermal(), g, 10, 0)

    def broken(*args, **kwargs):
        raise ArithmeticError("boom")

    monkeypatch.setattr(sf, "render_intensity", broken)
    with pytest.raises(ArithmeticError, match="frame 0: boom"):
        ens.frame(0)


def test_from_array_wraps_frames():
    data = np.random.default_rng(0).exponential(size=(20, 12, 16))
    ens = FrameEnsemble.from_array(data)
    assert ens.grid.shape == (12, 16) and ens.n_frames == 20
    assert np.array_equal(ens.materialize(), data)


# --- speckle area ------------------------------------------------------------------

def test_speckle_area_of_gaussian_field():
    g = GridSpec(96, 96, speckle_radius=3)
    area = measure_speckle_area(generate_ensemble(SourceSpec.thermal(), g, 400, 12))
    assert area == pytest.approx(FWHM_AREA_FACTOR * 9, rel=0.05)


def test_speckle_area_scales_with_sigma_squared():
    a2 = measure_speckle_area(generate_ensemble(SourceSpec.thermal(), GridSpec(96, 96, speckle_radius=2), 400, 1))
    a4 = measure_speckle_area(generate_ensemble(SourceSpec.thermal(), GridSpec(96, 96, speckle_radius=4), 400, 1))
    assert a4 / a2 == pytest.approx(4.0, rel=0.10)


def test_speckle_area_of_white_noise_is_one_pixel():
    data = np.random.default_rng(2).exponential(size=(400, 48, 48))
    area = measure_speckle_area(FrameEnsemble.from_array(data))
    assert area == pytest.approx(1.0, rel=0.3)


def test_speckle_area_needs_frames_and_a_peak():
    g = GridSpec(32, 32, speckle_radius=2)
    with pytest.raises(DomainError):
        measure_speckle_area(generate_ensemble(SourceSpec.thermal(), g, 50, 0))
    with pytest.raises(AnalysisError):
        measure_speckle_area(FrameEnsemble.from_array(np.ones((100, 32, 32))))
