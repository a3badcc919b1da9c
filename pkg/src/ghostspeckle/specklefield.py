"""Monte Carlo speckle frames for thermal and superthermal light.

A thermal frame is circular complex Gaussian white noise convolved (FFT,
periodic boundaries) with a Gaussian kernel of scale ``speckle_radius``;
the intensity is its squared modulus.  With that parameterisation the
normalised intensity covariance is ``exp(-d**2 / (2 sigma**2))``.

Case A ("speckled speckle") selects part of a thermal field with a pinhole
and diffuses it with a cloud of point scatterers that is redrawn every
frame.  Case B squares a thermal frame pixel by pixel (perfect second
harmonic generation).

Every frame has its own seed derived from ``(master_seed, frame_index)``,
so an ensemble is identical no matter how many threads generate it or in
which order the frames are requested.
"""

from __future__ import annotations

import functools
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, NamedTuple, Optional

import numpy as np

from .errors import AnalysisError, ConfigurationError, DomainError
from .photostatistics import SourceKind, SourceSpec

__all__ = [
    "GridSpec",
    "Frame",
    "FrameEnsemble",
    "PinholeSpec",
    "PinholeField",
    "ScattererCloud",
    "frame_seed",
    "default_threads",
    "intensity_covariance",
    "coherence_area",
    "synthesize_thermal_frame",
    "thermal_field",
    "apply_pinhole",
    "pinhole_mode_count",
    "pinhole_for_modes",
    "scatter_speckled_speckle",
    "second_harmonic",
    "render_intensity",
    "generate_ensemble",
    "measure_speckle_area",
]

CHUNK_FRAMES = 64
THREADS_ENV = "GHOSTSPECKLE_THREADS"
DEFAULT_SCATTERERS = 100
# FWHM area of exp(-d^2 / 2 sigma^2) is 2 ln2 pi sigma^2
FWHM_AREA_FACTOR = 2.0 * math.log(2.0) * math.pi


def default_threads() -> int:
    """Worker count from ``GHOSTSPECKLE_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be >= 1")
    return value


@dataclass(frozen=True)
class GridSpec:
    """Virtual camera: pixel counts, pitch (informational) and speckle scale in pixels."""

    width: int = 200
    height: int = 200
    pixel_pitch: float = 10.0
    speckle_radius: float = 4.0

    def __post_init__(self):
        for name in ("width", "height"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise DomainError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.width * self.height < 4:
            raise DomainError("grid must have at least 4 pixels")
        if not self.pixel_pitch > 0:
            raise DomainError("pixel_pitch must be positive")
        limit = min(self.width, self.height) / 4
        if not 0.5 <= self.speckle_radius <= limit:
            raise DomainError(
                f"speckle_radius must lie in [0.5, {limit:g}] px for a "
                f"{self.width}x{self.height} grid, got {self.speckle_radius!r}"
            )
        object.__setattr__(self, "speckle_radius", float(self.speckle_radius))
        object.__setattr__(self, "pixel_pitch", float(self.pixel_pitch))

    @property
    def shape(self) -> tuple:
        return (self.height, self.width)

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple:
        """Central pixel as ``(x, y)``."""
        return (self.width // 2, self.height // 2)

    def with_speckle_radius(self, radius: float) -> "GridSpec":
        return replace(self, speckle_radius=radius)

    @property
    def speckle_radius_limits(self) -> tuple:
        return (0.5, min(self.width, self.height) / 4)


@dataclass(frozen=True)
class Frame:
    grid: GridSpec
    intensity: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        arr = np.array(self.intensity, dtype=float)
        if arr.shape != self.grid.shape:
            raise DomainError(f"frame shape {arr.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DomainError("frame intensities must be finite and non-negative")
        if self.frame_index < 0:
            raise DomainError("frame_index must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "intensity", arr)


@dataclass(frozen=True)
class PinholeSpec:
    """Circular aperture centred at pixel ``center = (x, y)``."""

    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius >= 0.5:
            raise DomainError(f"pinhole radius must be >= 0.5 px, got {self.radius!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    def pixels(self, grid: GridSpec) -> np.ndarray:
        cx, cy = self.center
        if cx - self.radius < -0.5 or cy - self.radius < -0.5 or \
                cx + self.radius > grid.width - 0.5 or cy + self.radius > grid.height - 0.5:
            raise DomainError(f"pinhole {self} is not inside the {grid.width}x{grid.height} grid")
        y, x = np.indices(grid.shape)
        return (x - cx) ** 2 + (y - cy) ** 2 <= self.radius**2


class PinholeField(NamedTuple):
    field: np.ndarray
    mask: np.ndarray
    mu_eff: float


@dataclass(frozen=True)
class ScattererCloud:
    """Point scatterers of the second diffuser.

    ``positions[:, :2]`` are transverse coordinates (standard normal cloud,
    dimensionless) and ``positions[:, 2]`` the axial coordinate in
    wavelengths, uniform over ``[0, depth)``.
    """

    count: int
    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if self.count < 1 or pos.shape != (self.count, 3):
            raise DomainError("a cloud needs count >= 1 positions of shape (count, 3)")
        if not np.all(np.isfinite(pos)):
            raise DomainError("scatterer positions must be finite")
        object.__setattr__(self, "positions", pos)

    @classmethod
    def draw(cls, rng: np.random.Generator, count: int = DEFAULT_SCATTERERS, depth: float = 100.0):
        pos = np.empty((count, 3))
        pos[:, :2] = rng.standard_normal((count, 2))
        pos[:, 2] = rng.uniform(0.0, depth, size=count)
        return cls(count, pos)


def frame_seed(master_seed: int, frame_index: int) -> int:
    """64-bit seed of one frame, a pure function of ``(master_seed, frame_index)``."""
    ss = np.random.SeedSequence(int(master_seed) % 2**64, spawn_key=(int(frame_index),))
    return int(ss.generate_state(1, np.uint64)[0])


# --- field model -----------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _kernel_spectrum(height: int, width: int, sigma: float) -> np.ndarray:
    dy = np.fft.fftfreq(height) * height
    dx = np.fft.fftfreq(width) * width
    kern = np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2.0 * sigma**2))
    kern /= np.sqrt(np.sum(kern**2))
    spec = np.fft.fft2(kern)
    spec.setflags(write=False)
    return spec


@functools.lru_cache(maxsize=64)
def _covariance(height: int, width: int, sigma: float) -> np.ndarray:
    spec = _kernel_spectrum(height, width, sigma)
    gamma = np.fft.ifft2(np.abs(spec) ** 2).real
    cov = gamma**2
    cov.setflags(write=False)
    return cov


def intensity_covariance(grid: GridSpec) -> np.ndarray:
    """Normalised intensity covariance ``|gamma(d)|**2`` of a thermal frame.

    Exact for the discrete periodic kernel; lag ``(0, 0)`` is at index
    ``[0, 0]`` (FFT order), where the value is 1.
    """
    return _covariance(grid.height, grid.width, grid.speckle_radius)


def coherence_area(grid: GridSpec) -> float:
    """Sum of ``|gamma|**2`` over all lags (pixels**2), about ``2 pi sigma**2``."""
    return float(intensity_covariance(grid).sum())


def thermal_field(grid: GridSpec, rng: np.random.Generator) -> np.ndarray:
    """One complex Gaussian speckle field with unit mean intensity."""
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    noise *= math.sqrt(0.5)
    return np.fft.ifft2(np.fft.fft2(noise) * _kernel_spectrum(grid.height, grid.width, grid.speckle_radius))


def _abs2(z):
    return z.real * z.real + z.imag * z.imag


def _thermal_intensity(grid, rng, modes):
    out = _abs2(thermal_field(grid, rng))
    for _ in range(modes - 1):
        out += _abs2(thermal_field(grid, rng))
    if modes > 1:
        out /= modes
    return out


def _integer_modes(name, value):
    rounded = int(round(value))
    if abs(value - rounded) > 1e-9:
        raise ConfigurationError(
            f"{name}={value} must be an integer for field-level simulation "
            "(non-integer mode counts are supported by the analytic densities and samplers)"
        )
    return rounded


def synthesize_thermal_frame(grid: GridSpec, mean: float, seed: int, modes: int = 1,
                             frame_index: int = 0) -> Frame:
    """Thermal speckle frame with ensemble-mean intensity ``mean``.

    ``modes > 1`` adds that many independent speckle patterns incoherently,
    so each pixel is gamma distributed with shape ``modes``.
    """
    if not mean > 0:
        raise DomainError("mean must be positive")
    modes = _integer_modes("modes", modes)
    if modes < 1:
        raise DomainError("modes must be >= 1")
    rng = np.random.default_rng(seed)
    return Frame(grid, mean * _thermal_intensity(grid, rng, modes), frame_index)


def _pinhole_modes(grid: GridSpec, mask: np.ndarray) -> float:
    cov_spec = np.fft.rfft2(intensity_covariance(grid))
    smeared = np.fft.irfft2(np.fft.rfft2(mask.astype(float)) * cov_spec, s=grid.shape)
    n = mask.sum()
    return float(n * n / np.sum(smeared[mask]))


def pinhole_mode_count(grid: GridSpec, ph: PinholeSpec) -> float:
    """Number of coherence areas transmitted by the pinhole.

    ``n**2 / sum_{p,q in disk} |gamma(p - q)|**2``: 1 for a single pixel and
    ``area / coherence_area`` for a disk much larger than a speckle.
    """
    return _pinhole_modes(grid, ph.pixels(grid))


@functools.lru_cache(maxsize=128)
def _pinhole_for_modes(grid: GridSpec, mu: float) -> PinholeSpec:
    cx, cy = grid.center
    r_max = min(cx + 0.5, cy + 0.5, grid.width - 0.5 - cx, grid.height - 0.5 - cy)
    best, best_err = None, math.inf
    radius = 0.5
    while radius <= r_max:
        ph = PinholeSpec((cx, cy), radius)
        modes = pinhole_mode_count(grid, ph)
        err = abs(math.log(modes / mu))
        if err < best_err:
            best, best_err = ph, err
        if modes > mu:
            break
        radius += 0.5
    return best


def pinhole_for_modes(grid: GridSpec, mu: float) -> PinholeSpec:
    """Centred pinhole whose mode count is closest to ``mu`` (radius on a 0.5 px grid)."""
    if not mu >= 1:
        raise DomainError("mode count must be >= 1")
    return _pinhole_for_modes(grid, float(mu))


def apply_pinhole(field: np.ndarray, ph: PinholeSpec, grid: GridSpec) -> PinholeField:
    """Zero the field outside the disk and report its effective mode count."""
    field = np.asarray(field)
    if field.shape != grid.shape:
        raise DomainError("field does not match grid")
    mask = ph.pixels(grid)
    return PinholeField(np.where(mask, field, 0), mask, _pinhole_modes(grid, mask))


def _scatter(amplitudes, positions, grid):
    """Sum of scattered waves on the pixel grid, ``sum_j A_j exp(i phi_j(p)) / sqrt(N)``.

    Paraxial far-field phases: the transverse position of a scatterer sets a
    tilt ``kappa * (X x + Y y)`` and its axial position a piston ``2 pi Z``.
    ``kappa = 1 / (sqrt(2) sigma)`` gives the same speckle size as the
    thermal field.
    """
    kappa = 1.0 / (math.sqrt(2.0) * grid.speckle_radius)
    x = np.arange(grid.width) - grid.width / 2.0
    y = np.arange(grid.height) - grid.height / 2.0
    weights = amplitudes * np.exp(2j * np.pi * positions[:, 2]) / math.sqrt(len(amplitudes))
    ex = np.exp(1j * kappa * np.outer(positions[:, 0], x))
    ey = np.exp(1j * kappa * np.outer(positions[:, 1], y))
    return (ey.T * weights) @ ex


def _pinhole_samples(field, support, count, rng):
    idx = rng.integers(0, support.size, size=count)
    return field.ravel()[support[idx]]


def scatter_speckled_speckle(pinhole_field, cloud: ScattererCloud, grid: GridSpec, seed: int,
                             frame_index: int = 0) -> Frame:
    """Diffuse the light leaving a pinhole with a cloud of point scatterers.

    Each scatterer re-radiates the field found at a random pixel of the
    pinhole (chosen with ``seed``).  ``pinhole_field`` is a
    :class:`PinholeField` or a complex array that is zero outside the disk.
    """
    if isinstance(pinhole_field, PinholeField):
        field_arr, support = pinhole_field.field, np.flatnonzero(pinhole_field.mask)
    else:
        field_arr = np.asarray(pinhole_field)
        support = np.flatnonzero(field_arr)
    if field_arr.shape != grid.shape:
        raise DomainError("pinhole field does not match grid")
    if support.size == 0 or not np.any(field_arr.ravel()[support]):
        raise DomainError("pinhole field is identically zero")
    rng = np.random.default_rng(seed)
    amps = _pinhole_samples(field_arr, support, cloud.count, rng)
    return Frame(grid, _abs2(_scatter(amps, cloud.positions, grid)), frame_index)


def second_harmonic(frame: Frame, k: float) -> Frame:
    """Perfect frequency doubling, ``k * I**2`` pixel by pixel."""
    if not k > 0:
        raise DomainError("conversion efficiency k must be positive")
    return Frame(frame.grid, k * frame.intensity**2, frame.frame_index)


# --- ensembles -------------------------------------------------------------

def _case_a_intensity(spec, grid, seed, scatterers):
    thermal_ss, scatter_ss = np.random.SeedSequence(seed).spawn(2)
    field_ = thermal_field(grid, np.random.default_rng(thermal_ss))
    ph = pinhole_for_modes(grid, spec.mu_f)
    mask = ph.pixels(grid)
    support = np.flatnonzero(mask)
    rng = np.random.default_rng(scatter_ss)
    modes = _integer_modes("mu_s", spec.mu_s)
    out = np.zeros(grid.shape)
    for _ in range(modes):
        cloud = ScattererCloud.draw(rng, scatterers)
        amps = _pinhole_samples(field_, support, cloud.count, rng)
        out += _abs2(_scatter(amps, cloud.positions, grid))
    return out * (spec.mean_intensity / modes)


def render_intensity(spec: SourceSpec, grid: GridSpec, seed: int,
                     scatterers: int = DEFAULT_SCATTERERS) -> np.ndarray:
    """Intensity of one frame of ``spec`` generated from ``seed``."""
    if spec.kind is SourceKind.THERMAL:
        return spec.mean_intensity * _thermal_intensity(grid, np.random.default_rng(seed), 1)
    if spec.kind is SourceKind.CASE_A:
        return _case_a_intensity(spec, grid, seed, scatterers)
    modes = _integer_modes("mu", spec.mu)
    fund = spec.mean_fund * _thermal_intensity(grid, np.random.default_rng(seed), modes)
    return spec.k * fund * fund


def _ordered_map(fn: Callable, items, threads: int) -> Iterator:
    """``map`` that keeps order and at most ``2 * threads`` results in flight."""
    if threads <= 1:
        for item in items:
            yield fn(item)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending = deque()
        for item in items:
            pending.append(pool.submit(fn, item))
            if len(pending) >= 2 * threads:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


@dataclass(frozen=True)
class FrameEnsemble:
    """Ordered frames sharing one grid and source.

    Frames are generated lazily from ``(master_seed, frame_index)`` unless
    the ensemble wraps a stored array (see :meth:`from_array`).
    """

    spec: Optional[SourceSpec]
    grid: GridSpec
    n_frames: int
    master_seed: Optional[int]
    threads: int = 1
    scatterers: int = DEFAULT_SCATTERERS
    data: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_frames) != self.n_frames or self.n_frames < 1:
            raise DomainError("n_frames must be a positive integer")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")
        if self.data is None and (self.spec is None or self.master_seed is None):
            raise DomainError("a generated ensemble needs a source spec and a master seed")

    @classmethod
    def from_array(cls, frames, grid: Optional[GridSpec] = None, spec: Optional[SourceSpec] = None,
                   master_seed: Optional[int] = None, threads: int = 1) -> "FrameEnsemble":
        arr = np.asarray(frames)
        if arr.ndim != 3:
            raise DomainError("frames must be a (n, height, width) array")
        if grid is None:
            h, w = arr.shape[1:]
            grid = GridSpec(width=w, height=h, speckle_radius=max(0.5, min(min(h, w) / 4, 4.0)))
        if arr.shape[1:] != grid.shape:
            raise DomainError("frame array does not match grid")
        return cls(spec, grid, arr.shape[0], master_seed, threads, data=arr)

    def __len__(self):
        return self.n_frames

    def with_threads(self, threads: int) -> "FrameEnsemble":
        return replace(self, threads=threads)

    def frame_seed(self, index: int) -> int:
        return frame_seed(self.master_seed, index)

    def _render(self, index: int) -> np.ndarray:
        if self.data is not None:
            return np.asarray(self.data[index], dtype=float)
        try:
            return render_intensity(self.spec, self.grid, self.frame_seed(index), self.scatterers)
        except Exception as exc:
            raise type(exc)(f"frame {index}: {exc}") from exc

    def frame(self, index: int) -> Frame:
        if not 0 <= index < self.n_frames:
            raise IndexError(index)
        return Frame(self.grid, self._render(index), index)

    def __iter__(self) -> Iterator[Frame]:
        for start, block in self.chunks():
            for j, arr in enumerate(block):
                yield Frame(self.grid, arr, start + j)

    def _chunk(self, start: int, chunk_size: int) -> np.ndarray:
        stop = min(start + chunk_size, self.n_frames)
        if self.data is not None:
            return np.asarray(self.data[start:stop], dtype=float)
        out = np.empty((stop - start,) + self.grid.shape)
        for j in range(start, stop):
            out[j - start] = self._render(j)
        return out

    def map_chunks(self, fn: Callable, chunk_size: int = CHUNK_FRAMES) -> Iterator:
        """Yield ``fn(start, block)`` for consecutive frame blocks, in order.

        Generation and ``fn`` run in worker threads when ``threads > 1``; the
        block boundaries do not depend on the thread count.
        """
        starts = range(0, self.n_frames, chunk_size)
        return _ordered_map(lambda s: fn(s, self._chunk(s, chunk_size)), starts, self.threads)

    def chunks(self, chunk_size: int = CHUNK_FRAMES) -> Iterator:
        return self.map_chunks(lambda s, block: (s, block), chunk_size)

    def materialize(self) -> np.ndarray:
        out = np.empty((self.n_frames,) + self.grid.shape)
        for start, block in self.chunks():
            out[start:start + len(block)] = block
        return out


def generate_ensemble(spec: SourceSpec, grid: GridSpec, n_frames: int, master_seed: int,
                      threads: Optional[int] = None,
                      scatterers: int = DEFAULT_SCATTERERS) -> FrameEnsemble:
    """Lazy ensemble of ``n_frames`` frames of ``spec``.

    Thermal frames come straight from :func:`synthesize_thermal_frame`; case A
    runs thermal field -> centred pinhole with ``mu_f`` modes -> scatterer
    cloud (``mu_s`` independent diffuser realisations added incoherently);
    case B squares a thermal frame with ``mu`` modes and scales by ``k``.
    """
    if int(n_frames) != n_frames or n_frames < 1:
        raise DomainError("n_frames must be a positive integer")
    if spec.kind is SourceKind.CASE_A:
        _integer_modes("mu_s", spec.mu_s)
        pinhole_for_modes(grid, spec.mu_f)
    elif spec.kind is SourceKind.CASE_B:
        _integer_modes("mu", spec.mu)
    return FrameEnsemble(spec, grid, int(n_frames), int(master_seed),
                         default_threads() if threads is None else int(threads), scatterers)


def _half_max_area(acf: np.ndarray, baseline: float, upsample: int) -> float:
    from scipy import ndimage

    h, w = acf.shape
    cy, cx = h // 2, w // 2
    excess = acf - baseline
    peak = excess[cy, cx]
    if not peak > 0 or not np.isfinite(peak):
        raise AnalysisError("autocorrelation has no resolvable peak above its baseline")
    labels, _ = ndimage.label(excess > 0.5 * peak)
    ys, xs = np.nonzero(labels == labels[cy, cx])
    if ys.min() == 0 or xs.min() == 0 or ys.max() == h - 1 or xs.max() == w - 1:
        raise AnalysisError("speckle peak is not contained in the autocorrelation map")
    y0, y1 = max(ys.min() - 2, 0), min(ys.max() + 3, h)
    x0, x1 = max(xs.min() - 2, 0), min(xs.max() + 3, w)
    crop = excess[y0:y1, x0:x1]
    fine = ndimage.zoom(crop, upsample, order=3, grid_mode=True, mode="nearest")
    fy = int((cy - y0 + 0.5) * upsample)
    fx = int((cx - x0 + 0.5) * upsample)
    flabels, _ = ndimage.label(fine > 0.5 * peak)
    return float(np.count_nonzero(flabels == flabels[fy, fx])) / upsample**2


def measure_speckle_area(ensemble: FrameEnsemble, upsample: int = 8) -> float:
    """Mean speckle area (pixels**2) from the averaged autocorrelation.

    The area is that of the central region where the baseline-subtracted
    autocorrelation exceeds half its peak, evaluated on a cubic-spline
    upsampled copy of the map so small speckles are not quantised to whole
    pixels.  The baseline is the mean over lags beyond three correlation
    lengths (first estimated from the outer ring of the map).
    """
    from .correlation import autocorrelation_fft

    if ensemble.n_frames < 100:
        raise DomainError("measure_speckle_area needs at least 100 frames")
    acf = autocorrelation_fft(ensemble).values
    h, w = acf.shape
    y, x = np.indices(acf.shape)
    r = np.hypot(y - h // 2, x - w // 2)
    ring = r >= 0.4 * min(h, w)
    baseline = float(acf[ring].mean())
    area = _half_max_area(acf, baseline, upsample)
    sigma = math.sqrt(area / FWHM_AREA_FACTOR)
    far = r >= 3.0 * sigma
    if np.count_nonzero(far) >= 16:
        baseline = float(acf[far].mean())
        area = _half_max_area(acf, baseline, upsample)
    return area
