"""Figures of merit of reconstructed maps and the speckle-count sweep."""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .correlation import (
    CorrelationMap,
    Mask,
    Region,
    auto_reference,
    background_region,
    correlate,
)
from .errors import AnalysisError, ConfigurationError, DomainError, NegativeContrastWarning
from .photostatistics import SourceKind, SourceSpec
from .specklefield import (
    FWHM_AREA_FACTOR,
    GridSpec,
    default_threads,
    generate_ensemble,
    measure_speckle_area,
)

__all__ = [
    "Method",
    "MetricsRecord",
    "PowerLawFit",
    "contrast",
    "snr",
    "fit_power_law",
    "calibrate_speckle_radius",
    "sweep_speckle_count",
    "fit_sweep",
    "flag_exceptions",
]


class Method(str, enum.Enum):
    GI = "GI"
    DGI = "DGI"


@dataclass(frozen=True)
class MetricsRecord:
    ratio: float
    contrast: float
    snr: float
    method: Method
    source: SourceKind
    n_frames: int
    seed: int = 0
    contrast_clamped: bool = False

    def __post_init__(self):
        if not self.ratio > 0:
            raise DomainError("ratio must be positive")
        if self.n_frames < 2:
            raise DomainError("n_frames must be >= 2")
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "source", SourceKind.parse(self.source))


@dataclass(frozen=True)
class PowerLawFit:
    """``y = a * x**b`` fitted in log-log space; ``residual`` is the RMS log residual."""

    a: float
    b: float
    residual: float

    def __call__(self, x):
        return self.a * np.asarray(x, dtype=float) ** self.b


def _regions(cmap: CorrelationMap, obj: Region, background: Region):
    if obj.pixels.shape != cmap.values.shape or background.pixels.shape != cmap.values.shape:
        raise DomainError("regions do not match the map grid")
    if obj.overlaps(background):
        raise DomainError("object and background regions overlap")
    return cmap.values[obj.pixels], cmap.values[background.pixels]


def _difference(cmap, obj, background):
    im, bg = _regions(cmap, obj, background)
    return float(im.mean() - bg.mean()), bg


def contrast(cmap: CorrelationMap, obj: Region, background: Region) -> float:
    """``sqrt(mean(object) - mean(background))`` of the map.

    A negative difference means the object is buried in noise; the contrast
    is then reported as 0 and a :class:`NegativeContrastWarning` is issued.
    """
    diff, _ = _difference(cmap, obj, background)
    if diff < 0:
        warnings.warn(f"object mean below background by {-diff:.3g}; contrast set to 0",
                      NegativeContrastWarning, stacklevel=2)
        return 0.0
    return math.sqrt(diff)


def snr(cmap: CorrelationMap, obj: Region, background: Region) -> float:
    """Object-background difference over the sample std (ddof=1) of the background pixels."""
    if background.area < 2:
        raise DomainError("background region needs at least 2 pixels")
    diff, bg = _difference(cmap, obj, background)
    sd = float(bg.std(ddof=1))
    if sd == 0:
        raise AnalysisError("background has zero spread; SNR undefined")
    return diff / sd


def fit_power_law(points) -> PowerLawFit:
    """Least-squares line through ``(ln x, ln y)``."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("points must be a sequence of (x, y) pairs")
    if len(pts) < 3:
        raise DomainError("a power-law fit needs at least 3 points")
    if np.any(~np.isfinite(pts)) or np.any(pts <= 0):
        raise DomainError("power-law fit needs strictly positive x and y")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    if np.ptp(lx) == 0:
        raise DomainError("power-law fit needs distinct x values")
    design = np.column_stack([np.ones_like(lx), lx])
    (intercept, slope), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (intercept + slope * lx)
    return PowerLawFit(float(math.exp(intercept)), float(slope), float(np.sqrt(np.mean(resid**2))))


# --- sweep -------------------------------------------------------------------

def _peak_shape_factor(spec: SourceSpec) -> float:
    # half-maximum width of g2(d) - g2(inf) relative to thermal, for the first guess only
    if spec.kind is SourceKind.CASE_B:
        x = -2.0 + math.sqrt(6.5)
        return math.log(1.0 / x) / math.log(2.0)
    return 1.0


def _sub_seed(master_seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(int(master_seed) % 2**64, spawn_key=tuple(key))
    return int(ss.generate_state(1, np.uint64)[0])


def calibrate_speckle_radius(spec: SourceSpec, grid: GridSpec, target_area: float, seed: int,
                             pilot_frames: int = 400, rtol: float = 0.03, max_iter: int = 5,
                             threads: Optional[int] = None):
    """Find the kernel scale whose measured speckle area is ``target_area``.

    Starts from the Gaussian half-maximum relation and refines with pilot
    ensembles (``sigma`` scales as the square root of the area).  Returns
    ``(grid, measured_area)``; raises :class:`ConfigurationError` when the
    needed scale falls outside the grid's allowed speckle radii.
    """
    lo, hi = grid.speckle_radius_limits
    sigma = math.sqrt(target_area / (FWHM_AREA_FACTOR * _peak_shape_factor(spec)))
    area = None
    for it in range(max_iter):
        clamped = min(max(sigma, lo), hi)
        trial = grid.with_speckle_radius(clamped)
        pilot = generate_ensemble(spec, trial, pilot_frames, _sub_seed(seed, it), threads)
        area = measure_speckle_area(pilot)
        if abs(area / target_area - 1.0) <= rtol:
            return trial, area
        if clamped != sigma and (area - target_area) * (sigma - clamped) > 0:
            break
        sigma = clamped * math.sqrt(target_area / area)
        if (sigma < lo and clamped == lo) or (sigma > hi and clamped == hi):
            break
    return trial, area


def _feasible_ratios(spec, grid, mask_area):
    lo, hi = grid.speckle_radius_limits
    f = FWHM_AREA_FACTOR * _peak_shape_factor(spec)
    return mask_area / (f * hi**2), mask_area / (f * lo**2)


def sweep_speckle_count(spec: SourceSpec, grid: GridSpec, mask: Mask, ratios: Sequence[float],
                        n_frames: int, master_seed: int, threads: Optional[int] = None,
                        reference: Optional[Region] = None, ratio_rtol: float = 0.10,
                        pilot_frames: int = 400) -> List[MetricsRecord]:
    """C and SNR of GI and DGI versus object area over speckle area.

    For every ratio the speckle radius is calibrated so that
    ``mask.area / measured_speckle_area`` is within ``ratio_rtol`` of the
    requested value, an ensemble is generated with a seed derived from
    ``(master_seed, ratio index)``, and one pass gives the GI and DGI maps.
    Background pixels are those at least ``max(5, 3 sigma)`` px from the
    object.  Records carry the achieved ratio.
    """
    ratios = [float(r) for r in ratios]
    if not ratios:
        raise DomainError("no ratios given")
    if len(set(ratios)) != len(ratios) or any(r < 1 for r in ratios):
        raise DomainError("ratios must be distinct and >= 1")
    threads = default_threads() if threads is None else threads
    rmin, rmax = _feasible_ratios(spec, grid, mask.area)
    records = []
    for idx, ratio in enumerate(ratios):
        if not rmin <= ratio <= rmax:
            raise ConfigurationError(
                f"ratio {ratio:g} cannot be reached with a {mask.area}-pixel object on a "
                f"{grid.width}x{grid.height} grid; feasible range is about [{rmin:.3g}, {rmax:.3g}]"
            )
        seed = _sub_seed(master_seed, idx)
        target = mask.area / ratio
        trial, area = calibrate_speckle_radius(spec, grid, target, _sub_seed(seed, 1),
                                               pilot_frames=pilot_frames, threads=threads)
        achieved = mask.area / area
        if abs(achieved / ratio - 1.0) > ratio_rtol:
            raise ConfigurationError(
                f"ratio {ratio:g} not reachable within {ratio_rtol:.0%} on this grid "
                f"(best {achieved:.3g} at speckle radius {trial.speckle_radius:.3g}); "
                f"feasible range is about [{rmin:.3g}, {rmax:.3g}]"
            )
        obj = mask.with_grid(trial)
        ref = auto_reference(obj) if reference is None else reference.with_grid(trial)
        try:
            bg = background_region(obj)
        except DomainError as exc:
            raise ConfigurationError(f"ratio {ratio:g}: {exc}") from exc
        ens = generate_ensemble(spec, trial, n_frames, seed, threads)
        maps = correlate(ens, mask=obj, reference=ref, dgi=True)
        for method, key in ((Method.GI, "gi"), (Method.DGI, "dgi")):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", NegativeContrastWarning)
                c = contrast(maps[key], obj, bg)
            records.append(MetricsRecord(achieved, c, snr(maps[key], obj, bg), method, spec.kind,
                                         n_frames, seed, contrast_clamped=bool(caught)))
    return records


def fit_sweep(records: Sequence[MetricsRecord]) -> dict:
    """Power-law fits of contrast and SNR per ``(source, method)`` curve.

    Curves with fewer than 3 points or non-positive values are skipped.
    Keys are ``(source, method, quantity)`` with quantity ``"contrast"`` or ``"snr"``.
    """
    fits = {}
    groups = {}
    for rec in records:
        groups.setdefault((rec.source, rec.method), []).append(rec)
    for (source, method), recs in groups.items():
        recs = sorted(recs, key=lambda r: r.ratio)
        for quantity in ("contrast", "snr"):
            pts = [(r.ratio, getattr(r, quantity)) for r in recs]
            try:
                fits[(source, method, quantity)] = fit_power_law(pts)
            except DomainError:
                continue
    return fits


def flag_exceptions(fits: dict, tol: float = 0.1) -> set:
    """Curves whose exponent departs from the typical one.

    For each quantity the median exponent over all curves is the reference;
    a curve is flagged when its ``b`` differs from it by more than ``tol``.
    """
    flagged = set()
    for quantity in {key[2] for key in fits}:
        keys = [key for key in fits if key[2] == quantity]
        if len(keys) < 3:
            continue
        median = float(np.median([fits[key].b for key in keys]))
        flagged.update(key for key in keys if abs(fits[key].b - median) > tol)
    return flagged
