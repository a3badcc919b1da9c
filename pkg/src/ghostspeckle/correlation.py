"""Ensemble correlation maps: FFT autocorrelation, single pixel, GI and DGI.

All maps come out of one streaming pass over the frames.  Each frame adds
to running sums (``sum I``, ``sum x``, ``sum x*I`` for every bucket signal
``x``, and the power spectrum for the autocorrelation), so an ensemble is
never held in memory.  The sums are kept separately for a fixed set of
contiguous frame batches; the batch-to-batch scatter of the finished maps
gives a standard error for every pixel, and the batch layout depends only
on the number of frames, not on chunking or threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .errors import AnalysisError, DomainError
from .specklefield import FrameEnsemble, GridSpec, intensity_covariance

__all__ = [
    "MapKind",
    "CorrelationMap",
    "Region",
    "Mask",
    "correlate",
    "autocorrelation_fft",
    "pixel_correlation",
    "ghost_image",
    "differential_ghost_image",
    "auto_reference",
    "background_region",
    "background_margin",
    "horizontal_section",
    "expected_thermal_map",
]

N_BATCHES = 16


class MapKind(str, enum.Enum):
    AUTOCORRELATION = "autocorrelation"
    PIXEL = "pixel"
    GI = "gi"
    DGI = "dgi"


@dataclass(frozen=True, eq=False)
class Region:
    """A non-empty set of pixels of a grid, stored as a boolean image."""

    grid: GridSpec
    pixels: np.ndarray

    def __post_init__(self):
        pix = np.asarray(self.pixels, dtype=bool)
        if pix.shape != self.grid.shape:
            raise DomainError(f"region shape {pix.shape} does not match grid {self.grid.shape}")
        if not pix.any():
            raise DomainError("region is empty")
        pix = pix.copy()
        pix.setflags(write=False)
        object.__setattr__(self, "pixels", pix)

    def __eq__(self, other):
        if not isinstance(other, Region):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.grid, self.pixels.tobytes()))

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.pixels))

    @classmethod
    def rectangle(cls, grid: GridSpec, x0: int, y0: int, width: int, height: int):
        if x0 < 0 or y0 < 0 or width < 1 or height < 1 or x0 + width > grid.width or y0 + height > grid.height:
            raise DomainError("rectangle is not inside the grid")
        pix = np.zeros(grid.shape, dtype=bool)
        pix[y0:y0 + height, x0:x0 + width] = True
        return cls(grid, pix)

    @classmethod
    def disk(cls, grid: GridSpec, center, radius: float):
        y, x = np.indices(grid.shape)
        return cls(grid, (x - center[0]) ** 2 + (y - center[1]) ** 2 <= radius**2)

    @classmethod
    def from_points(cls, grid: GridSpec, points):
        pix = np.zeros(grid.shape, dtype=bool)
        for x, y in points:
            if not (0 <= x < grid.width and 0 <= y < grid.height):
                raise DomainError(f"pixel {(x, y)} is outside the grid")
            pix[y, x] = True
        return cls(grid, pix)

    def overlaps(self, other: "Region") -> bool:
        return bool(np.any(self.pixels & other.pixels))

    def with_grid(self, grid: GridSpec):
        return type(self)(grid, self.pixels)


class Mask(Region):
    """Binary object: ``True`` marks transmitting pixels."""


@dataclass(frozen=True)
class CorrelationMap:
    values: np.ndarray
    grid: GridSpec
    kind: MapKind
    n_frames_used: int
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DomainError("map does not match grid")
        if not np.all(np.isfinite(vals)):
            raise AnalysisError("correlation map has non-finite values")
        object.__setattr__(self, "kind", MapKind(self.kind))
        if self.n_frames_used < 1:
            raise DomainError("n_frames_used must be positive")

    def scaled_for_display(self, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
        """Values mapped to [0, 1]; defaults to the map's own min/max."""
        lo = float(self.values.min()) if lo is None else lo
        hi = float(self.values.max()) if hi is None else hi
        if hi <= lo:
            return np.zeros_like(self.values)
        return np.clip((self.values - lo) / (hi - lo), 0.0, 1.0)


# --- accumulation ------------------------------------------------------------

class _Sums:
    def __init__(self, shape, buckets, pad_shape):
        self.n = 0
        self.s_i = np.zeros(shape)
        self.s_x = {name: 0.0 for name in buckets}
        self.s_xi = {name: np.zeros(shape) for name in buckets}
        self.s_pow = None if pad_shape is None else np.zeros((pad_shape[0], pad_shape[1] // 2 + 1))

    def add(self, other: "_Sums"):
        self.n += other.n
        self.s_i += other.s_i
        for name in self.s_x:
            self.s_x[name] += other.s_x[name]
            self.s_xi[name] += other.s_xi[name]
        if self.s_pow is not None:
            self.s_pow += other.s_pow


class _Plan:
    def __init__(self, grid, buckets, autocorrelation):
        self.grid = grid
        self.buckets = {name: np.flatnonzero(pix) for name, pix in buckets.items()}
        self.pad_shape = (2 * grid.height, 2 * grid.width) if autocorrelation else None

    def new(self):
        return _Sums(self.grid.shape, self.buckets, self.pad_shape)

    def sums(self, block):
        acc = self.new()
        flat = block.reshape(len(block), -1)
        acc.n = len(block)
        acc.s_i += block.sum(axis=0)
        for name, idx in self.buckets.items():
            x = flat[:, idx[0]] if idx.size == 1 else flat[:, idx].sum(axis=1)
            acc.s_x[name] = float(x.sum())
            acc.s_xi[name] += (x @ flat).reshape(self.grid.shape)
        if self.pad_shape is not None:
            spec = np.fft.rfft2(block, s=self.pad_shape)
            acc.s_pow += (spec.real**2 + spec.imag**2).sum(axis=0)
        return acc


def _batch_edges(n, n_batches):
    b = max(1, min(n_batches, n))
    return [i * n // b for i in range(b + 1)]


def _accumulate(ensemble: FrameEnsemble, plan: _Plan, n_batches: int):
    edges = _batch_edges(ensemble.n_frames, n_batches)

    def work(start, block):
        out = []
        stop = start + len(block)
        for b in range(len(edges) - 1):
            lo, hi = max(edges[b], start), min(edges[b + 1], stop)
            if lo < hi:
                out.append((b, plan.sums(block[lo - start:hi - start])))
        return out

    batches = [plan.new() for _ in range(len(edges) - 1)]
    for parts in ensemble.map_chunks(work):
        for b, part in parts:
            batches[b].add(part)
    return batches


def _mean_image(s: _Sums):
    mean = s.s_i / s.n
    if np.any(mean <= 0):
        raise AnalysisError("ensemble-mean intensity vanishes at some pixel")
    return mean


def _bucket_term(s: _Sums, name: str, mean):
    mx = s.s_x[name] / s.n
    if mx <= 0:
        raise AnalysisError(f"mean {name} signal is zero; correlation undefined")
    return (s.s_xi[name] / s.n) / (mx * mean)


def _autocorr(s: _Sums, grid: GridSpec):
    pad = (2 * grid.height, 2 * grid.width)
    num = np.fft.irfft2(s.s_pow / s.n, s=pad)
    mean = s.s_i / s.n
    if not np.any(mean > 0):
        raise AnalysisError("autocorrelation of all-zero frames is undefined")
    ms = np.fft.rfft2(mean, s=pad)
    den = np.fft.irfft2(ms.real**2 + ms.imag**2, s=pad)
    h, w = grid.shape
    dy = (np.arange(h) - h // 2) % pad[0]
    dx = (np.arange(w) - w // 2) % pad[1]
    num = num[np.ix_(dy, dx)]
    den = den[np.ix_(dy, dx)]
    if np.any(den <= 1e-12 * den.max()):
        raise AnalysisError("mean pattern autocorrelation vanishes; frames are degenerate")
    return num / den


def _finish(s: _Sums, grid, requests):
    out = {}
    mean = None
    if any(k != "autocorrelation" for k in requests):
        mean = _mean_image(s)
    for key in requests:
        if key == "autocorrelation":
            out[key] = _autocorr(s, grid)
        elif key == "dgi":
            out[key] = _bucket_term(s, "mask", mean) - _bucket_term(s, "reference", mean)
        elif key == "gi":
            out[key] = _bucket_term(s, "mask", mean)
        else:
            out[key] = _bucket_term(s, "pixel", mean)
    return out


_KINDS = {"autocorrelation": MapKind.AUTOCORRELATION, "pixel": MapKind.PIXEL,
          "gi": MapKind.GI, "dgi": MapKind.DGI}


def _pixel_region(grid, pixel):
    x, y = pixel
    if int(x) != x or int(y) != y or not (0 <= x < grid.width and 0 <= y < grid.height):
        raise DomainError(f"pixel {pixel} is outside the {grid.width}x{grid.height} grid")
    pix = np.zeros(grid.shape, dtype=bool)
    pix[int(y), int(x)] = True
    return pix


def correlate(ensemble: FrameEnsemble, *, autocorrelation: bool = False, pixel=None,
              mask: Optional[Mask] = None, reference: Optional[Region] = None,
              dgi: Optional[bool] = None, n_batches: int = N_BATCHES) -> Dict[str, CorrelationMap]:
    """Compute several correlation maps in one pass over ``ensemble``.

    Returns a dict keyed by ``"autocorrelation"``, ``"pixel"``, ``"gi"`` and
    ``"dgi"`` for the maps that were requested.  Giving a ``mask`` produces
    the GI map; DGI is added when ``dgi`` is true (default: when a
    ``reference`` is given), with :func:`auto_reference` as the default
    reference region.
    """
    if ensemble.n_frames < 2:
        raise DomainError("correlation maps need at least two frames")
    grid = ensemble.grid
    buckets = {}
    requests = []
    if autocorrelation:
        requests.append("autocorrelation")
    if pixel is not None:
        buckets["pixel"] = _pixel_region(grid, pixel)
        requests.append("pixel")
    if dgi is None:
        dgi = reference is not None
    if mask is not None:
        if mask.pixels.shape != grid.shape:
            raise DomainError("mask does not match the ensemble grid")
        buckets["mask"] = mask.pixels
        requests.append("gi")
        if dgi:
            if reference is None:
                reference = auto_reference(mask)
            if reference.pixels.shape != grid.shape:
                raise DomainError("reference region does not match the ensemble grid")
            if reference.overlaps(mask):
                raise DomainError("DGI reference region overlaps the object mask")
            buckets["reference"] = reference.pixels
            requests.append("dgi")
    elif dgi or reference is not None:
        raise DomainError("DGI needs an object mask")
    if not requests:
        raise DomainError("nothing to correlate")

    plan = _Plan(grid, buckets, autocorrelation)
    batches = _accumulate(ensemble, plan, n_batches)
    total = plan.new()
    for b in batches:
        total.add(b)
    values = _finish(total, grid, requests)
    per_batch = [_finish(b, grid, requests) for b in batches] if len(batches) > 1 else None
    out = {}
    for key in requests:
        stderr = None
        if per_batch is not None:
            stack = np.stack([pb[key] for pb in per_batch])
            stderr = stack.std(axis=0, ddof=1) / math.sqrt(len(per_batch))
        out[key] = CorrelationMap(values[key], grid, _KINDS[key], total.n, stderr)
    return out


def autocorrelation_fft(ensemble: FrameEnsemble) -> CorrelationMap:
    """Frame-averaged intensity autocorrelation, zero lag at the map centre.

    Each frame's (zero padded, i.e. non-circular) FFT autocorrelation is
    divided by the autocorrelation of the ensemble-mean frame, so
    uncorrelated lags sit at the background level of ``g2`` and the centre
    estimates ``g2(0)``.
    """
    return correlate(ensemble, autocorrelation=True)["autocorrelation"]


def pixel_correlation(ensemble: FrameEnsemble, pixel) -> CorrelationMap:
    """``<I_px I(p)> / (<I_px> <I(p)>)`` for the pixel ``(x, y)``."""
    return correlate(ensemble, pixel=pixel)["pixel"]


def ghost_image(ensemble: FrameEnsemble, mask: Mask) -> CorrelationMap:
    """``<b I(p)> / (<b> <I(p)>)`` with the bucket ``b`` summed over the mask."""
    return correlate(ensemble, mask=mask)["gi"]


def differential_ghost_image(ensemble: FrameEnsemble, mask: Mask,
                             reference: Optional[Region] = None) -> CorrelationMap:
    """GI map minus the same map computed with a reference bucket.

    The reference bucket sums a region that excludes the object; by default
    every pixel outside the mask (:func:`auto_reference`).
    """
    return correlate(ensemble, mask=mask, reference=reference, dgi=True)["dgi"]


# --- regions -----------------------------------------------------------------

def auto_reference(mask: Region) -> Region:
    """Default DGI reference: all pixels not belonging to the object."""
    return Region(mask.grid, ~mask.pixels)


def background_margin(grid: GridSpec) -> float:
    """Guard distance between object and background: ``max(5, 3 sigma)`` px."""
    return max(5.0, 3.0 * grid.speckle_radius)


def background_region(mask: Region, margin: Optional[float] = None) -> Region:
    """Pixels at least ``margin`` pixels away from every object pixel."""
    from scipy import ndimage

    margin = background_margin(mask.grid) if margin is None else margin
    dist = ndimage.distance_transform_edt(~mask.pixels)
    pix = dist >= margin
    if not pix.any():
        raise DomainError(f"no background pixels farther than {margin:g} px from the object")
    return Region(mask.grid, pix)


def horizontal_section(cmap: CorrelationMap, through=None) -> np.ndarray:
    """Row of the map through ``through = (x, y)`` (default: the map centre)."""
    x, y = cmap.grid.center if through is None else through
    return np.array(cmap.values[int(y)])


def expected_thermal_map(grid: GridSpec, mask: Region, reference: Optional[Region] = None) -> np.ndarray:
    """Noise-free GI (or DGI, with ``reference``) map for single-mode thermal frames.

    ``1 + sum_{q in mask} |gamma(p - q)|**2 / |mask|`` from the exact
    intensity covariance of the simulated field; the DGI version subtracts
    the same expression for the reference region.
    """
    cov = np.fft.rfft2(intensity_covariance(grid))

    def term(region):
        smeared = np.fft.irfft2(np.fft.rfft2(region.pixels.astype(float)) * cov, s=grid.shape)
        return 1.0 + smeared / region.area

    out = term(mask)
    if reference is not None:
        out = out - term(reference)
    return out
