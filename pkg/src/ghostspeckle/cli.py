"""Command line pipeline: simulate, reconstruct, sweep and selftest.

Configuration comes from an optional flat ``key = value`` file overridden by
command line flags; both use the same keys (flags spell ``_`` as ``-``).
Everything is validated into a :class:`RunConfig` before any work starts.
Artifacts go to ``output_dir`` together with ``manifest.txt``, and each
artifact carries the effective configuration as ``# key = value`` lines, so
``--replay ARTIFACT`` reruns it.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .correlation import (
    Mask,
    Region,
    auto_reference,
    background_region,
    correlate,
)
from .errors import ConfigurationError, DomainError, NegativeContrastWarning
from .io import (
    Manifest,
    read_frames,
    read_mask,
    text_digest,
    write_frames,
    write_map_csv,
    write_map_image,
    write_sweep_csv,
)
from .masks import square_mask
from .metrics import Method, contrast, fit_sweep, flag_exceptions, snr, sweep_speckle_count
from .photostatistics import SourceKind, SourceSpec, g2_case_a
from .specklefield import (
    THREADS_ENV,
    FrameEnsemble,
    GridSpec,
    generate_ensemble,
    pinhole_for_modes,
    pinhole_mode_count,
)

__all__ = ["RunConfig", "parse_config_text", "read_config_file", "config_from_artifact", "main"]

METHODS = ("autocorr", "pixel", "gi", "dgi")
SCALINGS = ("max", "fixed", "auto")

# key -> (default, help); order fixes the order of header lines
CONFIG_KEYS: Dict[str, Tuple[Optional[str], str]] = {
    "source": ("thermal", "thermal, case_a or case_b"),
    "mean_intensity": (None, "mean intensity (thermal, case_a)"),
    "mu_f": (None, "fundamental mode count (case_a)"),
    "mu_s": (None, "scattering mode count (case_a)"),
    "mu": (None, "mode count of the fundamental (case_b)"),
    "k": (None, "conversion efficiency (case_b)"),
    "mean_fund": (None, "mean fundamental intensity (case_b)"),
    "width": ("200", "grid width in pixels"),
    "height": ("200", "grid height in pixels"),
    "pixel_pitch": ("10.0", "pixel pitch in micrometres (documentation only)"),
    "speckle_radius": ("4.0", "speckle kernel scale sigma in pixels"),
    "scatterers": ("100", "scatterers per frame (case_a)"),
    "n_frames": ("1000", "number of frames"),
    "master_seed": ("0", "master seed"),
    "mask_path": (None, "binary PGM object mask"),
    "reference_region": ("auto", "DGI reference: auto or x0,y0,width,height"),
    "output_dir": ("ghostspeckle-out", "output directory"),
    "threads": (None, f"worker threads (default: ${THREADS_ENV} or 1)"),
    "cache": (None, "frame dump to write (simulate) or read (reconstruct)"),
    "method": ("dgi", "reconstruction: autocorr, pixel, gi or dgi"),
    "pixel": (None, "reference pixel x,y for the pixel map (default: grid centre)"),
    "scaling": ("max", "image scaling: max (0..map maximum), fixed (display_range) or auto (min..max)"),
    "display_range": (None, "lo,hi for fixed image scaling"),
    "ratios": ("1,2,4,8,16", "object-to-speckle area ratios for the sweep"),
    "sources": ("thermal,case_a,case_b", "sources for the sweep"),
    "object_size": ("16", "side of the square sweep object when no mask is given"),
    "pilot_frames": ("400", "frames per speckle-size calibration run"),
    "plot": ("true", "render sweep.png when matplotlib is available"),
}

# keys that change where or how fast, never what, an artifact contains
_LOCATION_KEYS = ("output_dir", "threads")


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigurationError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigurationError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read_config_file(path) -> Dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config_text(text, str(path))


def config_from_artifact(path) -> Dict[str, str]:
    """Recover the configuration embedded in an artifact's header lines."""
    out = {}
    with open(path, "rb") as fh:
        for raw in fh:
            try:
                line = raw.decode("ascii").strip()
            except UnicodeDecodeError:
                break
            if line.startswith("# "):
                key, sep, value = line[2:].partition("=")
                key = key.strip()
                if sep and key in CONFIG_KEYS:
                    out[key] = value.strip()
            elif out:
                break
    if not out:
        raise ConfigurationError(f"{path} carries no embedded configuration")
    return out


# --- value parsers -------------------------------------------------------------

def _float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ConfigurationError(f"{key}: must be finite")
    return value


def _int(key, text, minimum=None):
    try:
        value = int(text)
    except ValueError:
        raise ConfigurationError(f"{key}: {text!r} is not an integer") from None
    if minimum is not None and value < minimum:
        raise ConfigurationError(f"{key}: must be >= {minimum}")
    return value


def _list(key, text, conv, length=None):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if length is not None and len(items) != length:
        raise ConfigurationError(f"{key}: expected {length} comma-separated values, got {text!r}")
    if not items:
        raise ConfigurationError(f"{key}: empty list")
    return tuple(conv(key, t) for t in items)


def _bool(key, text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: {text!r} is not a boolean")


def _source(key, text):
    try:
        return SourceKind.parse(text)
    except (ValueError, DomainError):
        raise ConfigurationError(f"{key}: unknown source {text!r}") from None


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v.value if isinstance(v, SourceKind) else v) for v in value)
    if isinstance(value, SourceKind):
        return value.value
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    """Fully validated settings of one CLI invocation."""

    source: SourceSpec
    grid: GridSpec
    n_frames: int = 1000
    master_seed: int = 0
    mask_path: Optional[Path] = None
    reference_region: object = "auto"
    output_dir: Path = Path("ghostspeckle-out")
    threads: int = 1
    scatterers: int = 100
    cache: Optional[Path] = None
    method: str = "dgi"
    pixel: Optional[Tuple[int, int]] = None
    scaling: str = "max"
    display_range: Optional[Tuple[float, float]] = None
    ratios: Tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    sources: Tuple[SourceKind, ...] = tuple(SourceKind)
    object_size: int = 16
    pilot_frames: int = 400
    plot: bool = True
    source_params: Dict[str, str] = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "RunConfig":
        unknown = sorted(set(values) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(unknown)}")
        merged = {k: d for k, (d, _) in CONFIG_KEYS.items() if d is not None}
        merged.update({k: v for k, v in values.items() if v is not None and v != ""})
        get = merged.get

        kind = _source("source", merged["source"])
        params = {name: _float(name, get(name)) for name in ("mean_intensity", "mu_f", "mu_s", "mu", "k", "mean_fund")
                  if get(name) is not None}
        allowed = {SourceKind.THERMAL: {"mean_intensity"},
                   SourceKind.CASE_A: {"mean_intensity", "mu_f", "mu_s"},
                   SourceKind.CASE_B: {"mu", "k", "mean_fund"}}[kind]
        extra = sorted(set(params) - allowed)
        if extra:
            raise ConfigurationError(f"{', '.join(extra)} not applicable to source {kind.value}")
        try:
            spec = SourceSpec(kind, **params)
            grid = GridSpec(width=_int("width", merged["width"], 1), height=_int("height", merged["height"], 1),
                            pixel_pitch=_float("pixel_pitch", merged["pixel_pitch"]),
                            speckle_radius=_float("speckle_radius", merged["speckle_radius"]))
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc

        reference = merged["reference_region"]
        if reference != "auto":
            x0, y0, w, h = _list("reference_region", reference, _int, 4)
            try:
                reference = Region.rectangle(grid, x0, y0, w, h)
            except DomainError as exc:
                raise ConfigurationError(f"reference_region: {exc}") from exc

        method = merged["method"]
        if method not in METHODS:
            raise ConfigurationError(f"method: expected one of {', '.join(METHODS)}, got {method!r}")
        scaling = merged["scaling"]
        if scaling not in SCALINGS:
            raise ConfigurationError(f"scaling: expected one of {', '.join(SCALINGS)}, got {scaling!r}")
        display_range = _list("display_range", get("display_range"), _float, 2) if get("display_range") else None
        if scaling == "fixed" and display_range is None:
            raise ConfigurationError("scaling = fixed needs display_range = lo,hi")
        if display_range is not None and not display_range[1] > display_range[0]:
            raise ConfigurationError("display_range: hi must exceed lo")
        pixel = _list("pixel", get("pixel"), _int, 2) if get("pixel") else None
        if pixel is not None and not (0 <= pixel[0] < grid.width and 0 <= pixel[1] < grid.height):
            raise ConfigurationError(f"pixel {pixel} is outside the {grid.width}x{grid.height} grid")
        ratios = _list("ratios", merged["ratios"], _float)
        if any(r < 1 for r in ratios) or len(set(ratios)) != len(ratios):
            raise ConfigurationError("ratios must be distinct and >= 1")

        threads = get("threads")
        threads = _int("threads", threads, 1) if threads is not None else _env_threads()
        mask_path = Path(get("mask_path")) if get("mask_path") else None
        if mask_path is not None and not mask_path.is_file():
            raise ConfigurationError(f"mask_path: no such file {mask_path}")
        object_size = _int("object_size", merged["object_size"], 1)
        if object_size > min(grid.width, grid.height):
            raise ConfigurationError("object_size exceeds the grid")
        return cls(
            source=spec, grid=grid,
            n_frames=_int("n_frames", merged["n_frames"], 2),
            master_seed=_int("master_seed", merged["master_seed"]) % 2**64,
            mask_path=mask_path, reference_region=reference,
            output_dir=Path(merged["output_dir"]), threads=threads,
            scatterers=_int("scatterers", merged["scatterers"], 1),
            cache=Path(get("cache")) if get("cache") else None,
            method=method, pixel=pixel, scaling=scaling, display_range=display_range,
            ratios=ratios, sources=_list("sources", merged["sources"], _source),
            object_size=object_size,
            pilot_frames=_int("pilot_frames", merged["pilot_frames"], 100),
            plot=_bool("plot", merged["plot"]),
            source_params={k: merged[k] for k in params},
        )

    def to_mapping(self, include_location: bool = False) -> Dict[str, str]:
        """Canonical string form; location keys are left out unless asked for."""
        src = self.source.as_dict()
        values = {
            "source": src.pop("source"), **{k: _fmt(v) for k, v in src.items()},
            "width": self.grid.width, "height": self.grid.height,
            "pixel_pitch": self.grid.pixel_pitch, "speckle_radius": self.grid.speckle_radius,
            "scatterers": self.scatterers, "n_frames": self.n_frames, "master_seed": self.master_seed,
            "mask_path": self.mask_path.as_posix() if self.mask_path else None,
            "reference_region": (self.reference_region if isinstance(self.reference_region, str)
                                 else _rect_text(self.reference_region)),
            "output_dir": self.output_dir.as_posix(), "threads": self.threads,
            "cache": self.cache.as_posix() if self.cache else None,
            "method": self.method, "pixel": self.pixel, "scaling": self.scaling,
            "display_range": self.display_range, "ratios": self.ratios, "sources": self.sources,
            "object_size": self.object_size, "pilot_frames": self.pilot_frames, "plot": self.plot,
        }
        out = {}
        for key in CONFIG_KEYS:
            if key in _LOCATION_KEYS and not include_location:
                continue
            value = values.get(key)
            if value is not None:
                out[key] = _fmt(value)
        return out

    def header(self, command: str) -> Dict[str, str]:
        return {"ghostspeckle_version": __version__, "command": command, **self.to_mapping()}

    def digest(self, command: str) -> str:
        return text_digest("".join(f"{k} = {v}\n" for k, v in self.header(command).items()))


def _rect_text(region: Region) -> str:
    ys, xs = np.nonzero(region.pixels)
    return f"{xs.min()},{ys.min()},{xs.max() - xs.min() + 1},{ys.max() - ys.min() + 1}"


def _env_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    return _int(THREADS_ENV, raw, 1)


# --- commands ------------------------------------------------------------------

class _Output:
    def __init__(self, config: RunConfig, command: str):
        self.dir = config.output_dir
        self.header = config.header(command)
        self.digest = config.digest(command)
        self.manifest = Manifest(self.dir)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.dir}: {exc.strerror or exc}") from exc

    def register(self, *paths):
        for p in paths:
            self.manifest.add(p, self.digest)


def _ensemble(config: RunConfig, spec: Optional[SourceSpec] = None) -> FrameEnsemble:
    try:
        return generate_ensemble(spec or config.source, config.grid, config.n_frames, config.master_seed,
                                 config.threads, config.scatterers)
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from exc


def _analytic_g2(config: RunConfig) -> Tuple[float, str]:
    spec = config.source
    if spec.kind is SourceKind.CASE_A:
        mu_eff = pinhole_mode_count(config.grid, pinhole_for_modes(config.grid, spec.mu_f))
        return g2_case_a(mu_eff, spec.mu_s), f"pinhole mode count {mu_eff:.4f} (requested {spec.mu_f:g})"
    return spec.g2, ""


def cmd_simulate(config: RunConfig, out=print) -> Path:
    """Write the frame dump and a summary with the single-pixel g2 estimate."""
    o = _Output(config, "simulate")
    cache = config.cache or o.dir / "frames.gsf"
    ens = _ensemble(config)
    totals = {"s1": 0.0, "s2": 0.0}

    def tally(block):
        totals["s1"] += np.sum(block, axis=0)
        totals["s2"] += np.sum(block * block, axis=0)

    try:
        write_frames(cache, ens, extra=o.header, on_block=tally)
    except OSError as exc:
        raise OSError(f"cannot write frame dump {cache}: {exc.strerror or exc}") from exc
    n = config.n_frames
    mean = totals["s1"] / n
    g2_map = (totals["s2"] / n) / mean**2
    g2_hat = float(np.mean(g2_map))
    g2_se = float(np.std(g2_map, ddof=1) / math.sqrt(g2_map.size))
    expected, note = _analytic_g2(config)
    lines = [f"# {k} = {v}" for k, v in o.header.items()] + [
        f"frames = {n}",
        f"mean_intensity = {float(mean.mean()):.6g}",
        f"g2_single_pixel = {g2_hat:.6f}",
        f"g2_pixel_spread = {g2_se:.2g}",
        f"g2_analytic = {expected:.6f}",
    ]
    if note:
        lines.append(f"note = {note}")
    summary = o.dir / "summary.txt"
    summary.write_text("\n".join(lines) + "\n")
    o.register(summary)
    if cache.resolve().parent == o.dir.resolve():
        o.register(cache)
    out(f"wrote {n} frames to {cache}")
    out(f"single-pixel g2 = {g2_hat:.4f}  (analytic {expected:.4f}{'; ' + note if note else ''})")
    return cache


def _load_mask(config: RunConfig, grid: GridSpec) -> Mask:
    try:
        return read_mask(config.mask_path, grid)
    except (OSError, DomainError) as exc:
        raise ConfigurationError(f"mask_path: {exc}") from exc


def _display_range(config: RunConfig, values: np.ndarray):
    if config.scaling == "fixed":
        return config.display_range
    if config.scaling == "max":
        return 0.0, float(values.max())
    return float(values.min()), float(values.max())


def cmd_reconstruct(config: RunConfig, method: Optional[str] = None, out=print) -> Dict[str, Path]:
    """Reconstruct one correlation map and export it as CSV and 16-bit PGM."""
    method = method or config.method
    if method not in METHODS:
        raise ConfigurationError(f"unknown method {method!r}")
    if method in ("gi", "dgi") and config.mask_path is None:
        raise ConfigurationError(f"method {method} needs mask_path")
    o = _Output(config, "reconstruct")
    if config.cache is not None and config.cache.exists():
        try:
            ens = read_frames(config.cache, config.threads)
        except (OSError, DomainError) as exc:
            raise ConfigurationError(f"cache: cannot read {config.cache}: {exc}") from exc
        if ens.grid != config.grid:
            raise ConfigurationError(f"cache {config.cache} holds a different grid than configured")
        if ens.spec is not None and ens.spec != config.source:
            raise ConfigurationError(f"cache {config.cache} holds frames of a different source than configured")
        if ens.n_frames != config.n_frames or ens.master_seed != config.master_seed:
            raise ConfigurationError(f"cache {config.cache} holds a different frame count or seed than configured")
    else:
        ens = _ensemble(config)
    grid = ens.grid

    mask = _load_mask(config, grid) if config.mask_path is not None else None
    kwargs = {}
    if method == "autocorr":
        kwargs["autocorrelation"] = True
        key = "autocorrelation"
    elif method == "pixel":
        kwargs["pixel"] = config.pixel or grid.center
        key = "pixel"
    else:
        reference = None
        if method == "dgi":
            reference = auto_reference(mask) if config.reference_region == "auto" else config.reference_region
        kwargs.update(mask=mask, reference=reference, dgi=method == "dgi")
        key = method
    try:
        cmap = correlate(ens, **kwargs)[key]
    except DomainError as exc:
        raise ConfigurationError(str(exc)) from exc

    written = {}
    csv_path = write_map_csv(o.dir / f"{method}.csv", cmap, header=o.header)
    lo, hi = _display_range(config, cmap.values)
    img_path = write_map_image(o.dir / f"{method}.pgm", cmap, lo, hi, header=o.header)
    written.update(csv=csv_path, image=img_path)
    o.register(csv_path, img_path, img_path.with_name(img_path.name + ".scale.txt"))
    out(f"wrote {csv_path} and {img_path}")

    if mask is not None and method in ("gi", "dgi"):
        bg = background_region(mask)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", NegativeContrastWarning)
            c = contrast(cmap, mask, bg)
        s = snr(cmap, mask, bg)
        m_path = o.dir / f"{method}_metrics.csv"
        lines = [f"# {k} = {v}" for k, v in o.header.items()]
        lines += ["method,source,contrast,snr,n_frames,seed,contrast_clamped",
                  f"{Method(method.upper()).value},{config.source.kind.value},{c:.9g},{s:.9g},"
                  f"{cmap.n_frames_used},{config.master_seed},{'yes' if caught else 'no'}"]
        m_path.write_text("\n".join(lines) + "\n")
        o.register(m_path)
        written["metrics"] = m_path
        out(f"C = {c:.4f}  SNR = {s:.3f}")
    return written


def _sweep_spec(config: RunConfig, kind: SourceKind) -> SourceSpec:
    if kind is config.source.kind:
        return config.source
    return SourceSpec(kind)


def cmd_sweep(config: RunConfig, ratios: Optional[Sequence[float]] = None, out=print) -> Dict[str, Path]:
    """C and SNR versus ratio for every configured source, with power-law fits."""
    ratios = tuple(ratios or config.ratios)
    o = _Output(config, "sweep")
    grid = config.grid
    mask = _load_mask(config, grid) if config.mask_path else square_mask(grid, config.object_size)
    reference = None if config.reference_region == "auto" else config.reference_region
    records = []
    for kind in config.sources:
        out(f"sweeping {kind.value} over ratios {', '.join(f'{r:g}' for r in ratios)}")
        try:
            records += sweep_speckle_count(_sweep_spec(config, kind), grid, mask, ratios, config.n_frames,
                                           config.master_seed, config.threads, reference,
                                           pilot_frames=config.pilot_frames)
        except DomainError as exc:
            raise ConfigurationError(str(exc)) from exc
    fits = fit_sweep(records)
    flagged = flag_exceptions(fits)
    path = write_sweep_csv(o.dir / "sweep.csv", records, fits, header=o.header, flagged=flagged)
    o.register(path)
    written = {"csv": path}
    for (source, method, quantity), fit in fits.items():
        mark = "  exception" if (source, method, quantity) in flagged else ""
        out(f"{source.value:8s} {method.value:3s} {quantity:8s} a = {fit.a:.4g}  b = {fit.b:+.3f}{mark}")
    if config.plot:
        plot = _plot_sweep(records, fits, o.dir / "sweep.png")
        if plot is None:
            out("matplotlib not installed; skipping sweep.png")
        else:
            o.register(plot)
            written["plot"] = plot
    return written


def _plot_sweep(records, fits, path: Path) -> Optional[Path]:
    try:
        import matplotlib
    except ImportError:
        return None
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    markers = {Method.GI: "o", Method.DGI: "s"}
    for ax, quantity, label in ((axes[0], "contrast", "C"), (axes[1], "snr", "SNR")):
        for key in sorted({(r.source, r.method) for r in records}, key=lambda k: (k[0].value, k[1].value)):
            recs = sorted((r for r in records if (r.source, r.method) == key), key=lambda r: r.ratio)
            x = np.array([r.ratio for r in recs])
            line = ax.loglog(x, [getattr(r, quantity) for r in recs], markers[key[1]],
                             label=f"{key[0].value} {key[1].value}")[0]
            fit = fits.get((key[0], key[1], quantity))
            if fit is not None:
                ax.loglog(x, fit(x), "-", color=line.get_color(), lw=0.8)
        ax.set_xlabel("object area / speckle area")
        ax.set_ylabel(label)
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def cmd_selftest(criteria: Optional[Sequence[int]] = None, out=print) -> bool:
    from .acceptance import QUICK, run_criteria

    results = run_criteria(criteria or QUICK, out=out)
    return all(r.passed for r in results)


# --- argument handling -----------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser, skip=()):
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--replay", metavar="ARTIFACT", help="take the configuration embedded in an artifact")
    for key, (default, help_) in CONFIG_KEYS.items():
        if key in skip:
            continue
        flag = "--" + key.replace("_", "-")
        extra = {"dest": key, "default": None, "help": help_ + (f" [{default}]" if default else "")}
        if key == "master_seed":
            p.add_argument(flag, "--seed", **extra)
        else:
            p.add_argument(flag, **extra)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ghostspeckle",
                                     description="Ghost imaging with thermal and superthermal speckle.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_config_flags(sub.add_parser("simulate", help="generate and cache a frame ensemble"))
    rec = sub.add_parser("reconstruct", help="correlation map from a cache or fresh frames")
    rec.add_argument("method_arg", nargs="?", choices=METHODS, metavar="METHOD",
                     help="autocorr, pixel, gi or dgi (overrides the method key)")
    _add_config_flags(rec)
    _add_config_flags(sub.add_parser("sweep", help="C and SNR versus object/speckle area ratio"))
    st = sub.add_parser("selftest", help="run the statistical acceptance checks")
    st.add_argument("--criteria", help="comma-separated criterion numbers (default: the quick ones)")
    st.add_argument("--full", action="store_true", help="run all criteria (takes tens of minutes)")
    return parser


def config_from_args(args) -> RunConfig:
    values = {}
    if getattr(args, "replay", None):
        values.update(config_from_artifact(args.replay))
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    values.update({k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k, None) is not None})
    if getattr(args, "method_arg", None):
        values["method"] = args.method_arg
    return RunConfig.from_mapping(values)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "selftest":
            from .acceptance import ALL

            criteria = None
            if args.full:
                criteria = ALL
            elif args.criteria:
                criteria = [int(c) for c in args.criteria.split(",")]
            return 0 if cmd_selftest(criteria) else 1
        config = config_from_args(args)
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "reconstruct":
            cmd_reconstruct(config)
        else:
            cmd_sweep(config)
    except ConfigurationError as exc:
        print(f"ghostspeckle: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ghostspeckle: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
