import numpy as np
import pytest

from ghostspeckle.correlation import (
    CorrelationMap,
    MapKind,
    Mask,
    Region,
    auto_reference,
    autocorrelation_fft,
    background_region,
    correlate,
    differential_ghost_image,
    expected_thermal_map,
    ghost_image,
    horizontal_section,
    pixel_correlation,
)
from ghostspeckle.errors import AnalysisError, DomainError
from ghostspeckle.masks import square_mask
from ghostspeckle.photostatistics import SourceSpec
from ghostspeckle.specklefield import FrameEnsemble, GridSpec, generate_ensemble

GRID16 = GridSpec(16, 16, speckle_radius=1.5)


@pytest.fixture(scope="module", params=["thermal", "case_a", "case_b"])
def small(request):
    spec = {"thermal": SourceSpec.thermal(), "case_a": SourceSpec.case_a(mu_f=1, mu_s=1),
            "case_b": SourceSpec.case_b(mu=1)}[request.param]
    ens = generate_ensemble(spec, GRID16, 500, 314)
    return ens, ens.materialize()


def loop_autocorrelation(frames):
    # literal sum over pixel pairs (x, x + d) for every lag in the centred h x w window
    n, h, w = frames.shape
    mean = frames.mean(axis=0)
    out = np.empty((h, w))
    for jy in range(h):
        for jx in range(w):
            dy, dx = jy - h // 2, jx - w // 2
            ys = range(max(0, -dy), min(h, h - dy))
            xs = range(max(0, -dx), min(w, w - dx))
            num = sum(frames[:, y, x] @ frames[:, y + dy, x + dx] for y in ys for x in xs) / n
            den = sum(mean[y, x] * mean[y + dy, x + dx] for y in ys for x in xs)
            out[jy, jx] = num / den
    return out


def loop_bucket_map(frames, bucket):
    n, h, w = frames.shape
    out = np.empty((h, w))
    for y in range(h):
        for x in range(w):
            s_bi = s_b = s_i = 0.0
            for t in range(n):
                s_bi += bucket[t] * frames[t, y, x]
                s_b += bucket[t]
                s_i += frames[t, y, x]
            out[y, x] = (s_bi / n) / ((s_b / n) * (s_i / n))
    return out


def rel_err(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


# --- oracle equivalence ---------------------------------------------------------------

def test_autocorrelation_matches_double_loop(small):
    ens, frames = small
    assert rel_err(autocorrelation_fft(ens).values, loop_autocorrelation(frames)) <= 1e-9


def test_pixel_map_matches_double_loop(small):
    ens, frames = small
    px = (3, 12)
    expected = loop_bucket_map(frames, frames[:, 12, 3])
    assert rel_err(pixel_correlation(ens, px).values, expected) <= 1e-9


def test_gi_and_dgi_match_double_loop(small):
    ens, frames = small
    mask = square_mask(GRID16, 4, center=(6, 7))
    ref = Region.rectangle(GRID16, 11, 0, 5, 5)
    gi = loop_bucket_map(frames, frames[:, mask.pixels].sum(axis=1))
    gr = loop_bucket_map(frames, frames[:, ref.pixels].sum(axis=1))
    assert rel_err(ghost_image(ens, mask).values, gi) <= 1e-9
    assert rel_err(differential_ghost_image(ens, mask, ref).values, gi - gr) <= 1e-9


def test_one_pass_equals_two_pass(small):
    ens, frames = small
    mask = square_mask(GRID16, 3)
    b = frames[:, mask.pixels].sum(axis=1)
    mean_i = frames.mean(axis=0)
    cov = np.tensordot(b - b.mean(), frames - mean_i, axes=(0, 0)) / len(frames)
    two_pass = 1.0 + cov / (b.mean() * mean_i)
    assert rel_err(ghost_image(ens, mask).values, two_pass) <= 1e-10


# --- definitions and reductions ---------------------------------------------------

def test_single_pixel_mask_reduces_to_pixel_correlation(small):
    ens, _ = small
    mask = Mask(GRID16, np.zeros(GRID16.shape, bool) | (np.indices(GRID16.shape)[0] == 5) & (np.indices(GRID16.shape)[1] == 9))
    a = ghost_image(ens, mask).values
    b = pixel_correlation(ens, (9, 5)).values
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_pixel_value_at_itself_is_its_g2(small):
    ens, frames = small
    series = frames[:, 4, 10]
    g2 = np.mean(series**2) / np.mean(series) ** 2
    assert pixel_correlation(ens, (10, 4)).values[4, 10] == pytest.approx(g2, rel=1e-12)


def test_constant_frames():
    ens = FrameEnsemble.from_array(np.full((10, 8, 8), 3.0), GridSpec(8, 8, speckle_radius=1))
    mask = square_mask(ens.grid, 2)
    np.testing.assert_allclose(autocorrelation_fft(ens).values, 1.0, rtol=1e-12)
    np.testing.assert_allclose(differential_ghost_image(ens, mask).values, 0.0, atol=1e-12)
    np.testing.assert_allclose(ghost_image(ens, mask).values, 1.0, rtol=1e-12)


@pytest.mark.parametrize("factor", [4.0, 0.125])
def test_power_of_two_scaling_is_exact(small, factor):
    ens, frames = small
    mask = square_mask(GRID16, 3)
    scaled = FrameEnsemble.from_array(frames * factor, GRID16)
    a = correlate(ens, autocorrelation=True, pixel=(2, 2), mask=mask, dgi=True)
    b = correlate(scaled, autocorrelation=True, pixel=(2, 2), mask=mask, dgi=True)
    for key in a:
        assert np.array_equal(a[key].values, b[key].values)


def test_general_scaling_is_invariant(small):
    ens, frames = small
    mask = square_mask(GRID16, 3)
    scaled = FrameEnsemble.from_array(frames * 3.7, GRID16)
    a = correlate(ens, autocorrelation=True, pixel=(2, 2), mask=mask, dgi=True)
    b = correlate(scaled, autocorrelation=True, pixel=(2, 2), mask=mask, dgi=True)
    for key in a:
        np.testing.assert_allclose(a[key].values, b[key].values, rtol=1e-12, atol=1e-14)


def test_threads_do_not_change_maps():
    g = GridSpec(24, 24, speckle_radius=2)
    mask = square_mask(g, 5)
    one = correlate(generate_ensemble(SourceSpec.case_a(), g, 300, 5, threads=1),
                    autocorrelation=True, pixel=(1, 1), mask=mask, dgi=True)
    many = correlate(generate_ensemble(SourceSpec.case_a(), g, 300, 5, threads=3),
                     autocorrelation=True, pixel=(1, 1), mask=mask, dgi=True)
    for key in one:
        assert np.array_equal(one[key].values, many[key].values)
        assert np.array_equal(one[key].stderr, many[key].stderr)


def test_stored_and_generated_ensembles_agree(small):
    ens, frames = small
    mask = square_mask(GRID16, 3)
    a = ghost_image(ens, mask)
    b = ghost_image(FrameEnsemble.from_array(frames, GRID16), mask)
    assert np.array_equal(a.values, b.values)


def test_map_metadata(small):
    ens, _ = small
    m = pixel_correlation(ens, (0, 0))
    assert m.kind is MapKind.PIXEL and m.n_frames_used == 500 and m.grid == GRID16
    assert m.stderr.shape == GRID16.shape and np.all(m.stderr >= 0)


# --- physics checks ------------------------------------------------------------------

def test_thermal_autocorrelation_peak_and_baseline():
    g = GridSpec(64, 64, speckle_radius=2)
    acf = autocorrelation_fft(generate_ensemble(SourceSpec.thermal(), g, 2000, 1))
    assert acf.values[32, 32] == pytest.approx(2.0, abs=0.1)
    y, x = np.indices(g.shape)
    far = np.hypot(y - 32, x - 32) >= 10
    assert acf.values[far].mean() == pytest.approx(1.0, abs=0.05)


def test_case_a_has_correlated_background():
    g = GridSpec(48, 48, speckle_radius=2)
    ens = generate_ensemble(SourceSpec.case_a(mu_f=1, mu_s=1), g, 3000, 2)
    mask = square_mask(g, 1)
    gi = ghost_image(ens, mask)
    bg = background_region(mask)
    # a single case-A pixel has heavy tails: judge it by its own batch standard error
    assert abs(gi.values[24, 24] - 4.0) <= 3 * gi.stderr[24, 24]
    assert gi.values[bg.pixels].mean() == pytest.approx(2.0, abs=0.15)


def test_thermal_ghost_image_matches_noise_free_map():
    g = GridSpec(48, 48, speckle_radius=1.5)
    mask = square_mask(g, 6)
    gi = ghost_image(generate_ensemble(SourceSpec.thermal(), g, 4000, 3), mask)
    expected = expected_thermal_map(g, mask)
    assert gi.values[mask.pixels].mean() == pytest.approx(expected[mask.pixels].mean(), abs=0.01)
    assert np.max(np.abs(gi.values - expected)) < 6 * np.max(gi.stderr)


def test_section_agreement_within_standard_errors():
    g = GridSpec(64, 64, speckle_radius=2)
    maps = correlate(generate_ensemble(SourceSpec.thermal(), g, 4000, 4), autocorrelation=True,
                     pixel=g.center, n_batches=64)
    a = horizontal_section(maps["autocorrelation"])
    p = horizontal_section(maps["pixel"])
    se = np.hypot(maps["autocorrelation"].stderr[32], maps["pixel"].stderr[32])
    z = np.abs(a - p) / se
    # 64 correlated lags: allow the odd 3-sigma excursion, never a 4-sigma one
    assert np.mean(z <= 3) >= 0.97 and z.max() <= 4


# --- regions and errors ---------------------------------------------------------------

def test_region_constructors():
    r = Region.rectangle(GRID16, 1, 2, 3, 4)
    assert r.area == 12 and r.pixels[2, 1] and r.pixels[5, 3] and not r.pixels[6, 3]
    assert Region.disk(GRID16, (8, 8), 1.0).area == 5
    assert Region.from_points(GRID16, [(0, 0), (15, 15)]).area == 2
    with pytest.raises(DomainError):
        Region.rectangle(GRID16, 14, 0, 3, 1)
    with pytest.raises(DomainError):
        Region.from_points(GRID16, [(16, 0)])
    with pytest.raises(DomainError):
        Region(GRID16, np.zeros(GRID16.shape, bool))
    with pytest.raises(DomainError):
        Mask(GRID16, np.ones((4, 4), bool))


def test_auto_reference_is_complement():
    mask = square_mask(GRID16, 4)
    ref = auto_reference(mask)
    assert not ref.overlaps(mask) and ref.area + mask.area == GRID16.size


def test_background_keeps_distance():
    g = GridSpec(64, 64, speckle_radius=3)
    mask = square_mask(g, 8)
    bg = background_region(mask)
    ys, xs = np.nonzero(mask.pixels)
    by, bx = np.nonzero(bg.pixels)
    d = np.min(np.hypot(by[:, None] - ys[None], bx[:, None] - xs[None]), axis=1)
    assert d.min() >= 9.0
    with pytest.raises(DomainError):
        background_region(Mask(g, np.ones(g.shape, bool)))


def test_dgi_rejects_overlapping_reference(small):
    ens, _ = small
    mask = square_mask(GRID16, 4)
    with pytest.raises(DomainError):
        differential_ghost_image(ens, mask, Region.rectangle(GRID16, 0, 0, 9, 9))


def test_correlate_argument_errors(small):
    ens, _ = small
    with pytest.raises(DomainError):
        correlate(ens)
    with pytest.raises(DomainError):
        correlate(ens, dgi=True)
    with pytest.raises(DomainError):
        pixel_correlation(ens, (16, 0))
    with pytest.raises(DomainError):
        correlate(FrameEnsemble.from_array(np.ones((1, 16, 16)), GRID16), autocorrelation=True)


def test_zero_means_are_signalled():
    frames = np.ones((5, 8, 8))
    frames[:, 0, 0] = 0.0
    ens = FrameEnsemble.from_array(frames, GridSpec(8, 8, speckle_radius=1))
    with pytest.raises(AnalysisError):
        pixel_correlation(ens, (0, 0))
    with pytest.raises(AnalysisError):
        autocorrelation_fft(FrameEnsemble.from_array(np.zeros((5, 8, 8)), GridSpec(8, 8, speckle_radius=1)))


def test_correlation_map_validation():
    with pytest.raises(AnalysisError):
        CorrelationMap(np.full(GRID16.shape, np.nan), GRID16, "gi", 3)
    with pytest.raises(DomainError):
        CorrelationMap(np.zeros((3, 3)), GRID16, "gi", 3)
    m = CorrelationMap(np.arange(256.0).reshape(16, 16), GRID16, "dgi", 3)
    scaled = m.scaled_for_display()
    assert scaled.min() == 0 and scaled.max() == 1
    assert np.all(m.scaled_for_display(0, 10)[1:] == 1)


def test_horizontal_section_default_is_centre_row():
    m = CorrelationMap(np.arange(256.0).reshape(16, 16), GRID16, "pixel", 3)
    np.testing.assert_array_equal(horizontal_section(m), np.arange(128.0, 144.0))
    np.testing.assert_array_equal(horizontal_section(m, (0, 2)), np.arange(32.0, 48.0))
