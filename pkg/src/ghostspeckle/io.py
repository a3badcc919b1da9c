"""File formats: frame dumps, map exports, PGM masks, sweep CSVs and the run manifest.

Frame dump layout: an ASCII header of ``key = value`` lines that starts with
``GHOSTSPECKLE-FRAMES 1`` and ends with a line ``end``, followed by the
frames as little-endian float32, row-major, frame after frame.
"""

from __future__ import annotations

import csv
import hashlib
import os
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .correlation import CorrelationMap, Mask
from .errors import ConfigurationError, DomainError
from .photostatistics import SourceSpec
from .specklefield import FrameEnsemble, GridSpec

__all__ = [
    "FRAME_MAGIC",
    "write_frames",
    "read_frames",
    "write_map_csv",
    "read_map_csv",
    "write_map_image",
    "write_pgm",
    "read_pgm",
    "read_mask",
    "write_mask",
    "write_sweep_csv",
    "read_sweep_csv",
    "file_digest",
    "text_digest",
    "Manifest",
]

FRAME_MAGIC = "GHOSTSPECKLE-FRAMES 1"


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _comment_lines(header: Optional[Mapping]) -> list:
    if not header:
        return []
    return [f"# {key} = {_fmt(value)}" for key, value in header.items()]


# --- frames --------------------------------------------------------------------

def write_frames(path, ensemble: FrameEnsemble, extra: Optional[Mapping] = None,
                 on_block: Optional[Callable] = None) -> Path:
    """Stream ``ensemble`` to a frame dump.  A partial file is removed on failure.

    ``on_block(block)`` sees every chunk of frames, in order, as it is written.
    """
    path = Path(path)
    header = {
        "width": ensemble.grid.width,
        "height": ensemble.grid.height,
        "n_frames": ensemble.n_frames,
        "dtype": "float32-le",
        "pixel_pitch": ensemble.grid.pixel_pitch,
        "speckle_radius": ensemble.grid.speckle_radius,
    }
    if ensemble.master_seed is not None:
        header["seed"] = ensemble.master_seed
    if ensemble.spec is not None:
        header.update(ensemble.spec.as_dict())
    if extra:
        header.update({k: v for k, v in extra.items() if k not in header})
    text = FRAME_MAGIC + "\n" + "".join(f"{k} = {_fmt(v)}\n" for k, v in header.items()) + "end\n"
    tmp = path.with_name(path.name + ".partial")
    try:
        with open(tmp, "wb") as fh:
            fh.write(text.encode("ascii"))
            for _, block in ensemble.chunks():
                fh.write(np.ascontiguousarray(block, dtype="<f4").tobytes())
                if on_block is not None:
                    on_block(block)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def _read_header(fh):
    first = fh.readline().decode("ascii").strip()
    if first != FRAME_MAGIC:
        raise DomainError(f"not a frame dump (first line {first!r})")
    header = {}
    while True:
        line = fh.readline()
        if not line:
            raise DomainError("frame dump header is not terminated by 'end'")
        line = line.decode("ascii").strip()
        if line == "end":
            return header, fh.tell()
        key, _, value = line.partition("=")
        header[key.strip()] = value.strip()


def read_frames(path, threads: int = 1) -> FrameEnsemble:
    """Open a frame dump as a memory-mapped :class:`FrameEnsemble`."""
    with open(path, "rb") as fh:
        header, offset = _read_header(fh)
    w, h, n = int(header["width"]), int(header["height"]), int(header["n_frames"])
    if header.get("dtype") != "float32-le":
        raise DomainError(f"unsupported frame dtype {header.get('dtype')!r}")
    grid = GridSpec(width=w, height=h, pixel_pitch=float(header.get("pixel_pitch", 10.0)),
                    speckle_radius=float(header.get("speckle_radius", 4.0)))
    expected = offset + 4 * w * h * n
    if os.path.getsize(path) != expected:
        raise DomainError(f"frame dump {path} is truncated or oversized")
    data = np.memmap(path, dtype="<f4", mode="r", offset=offset, shape=(n, h, w))
    spec = None
    if "source" in header:
        params = {k: float(header[k]) for k in ("mean_intensity", "mu_f", "mu_s", "mu", "k", "mean_fund")
                  if k in header}
        spec = SourceSpec(header["source"], **params)
    seed = int(header["seed"]) if "seed" in header else None
    return FrameEnsemble.from_array(data, grid, spec, seed, threads)


# --- maps ----------------------------------------------------------------------

def write_map_csv(path, cmap: CorrelationMap, header: Optional[Mapping] = None) -> Path:
    """Row-major CSV with 9 significant digits; ``header`` becomes ``#`` comment lines."""
    path = Path(path)
    lines = _comment_lines({"kind": cmap.kind.value, "n_frames": cmap.n_frames_used, **(header or {})})
    with open(path, "w", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
        for row in cmap.values:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")
    return path


def read_map_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", ndmin=2)


def write_pgm(path, image, maxval: int = 65535, comments: Sequence[str] = ()) -> Path:
    """Binary PGM (P5); ``image`` holds integers in ``[0, maxval]``."""
    path = Path(path)
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise DomainError("PGM images are 2-D")
    if maxval < 1 or maxval > 65535:
        raise DomainError("PGM maxval must be in [1, 65535]")
    dtype = ">u2" if maxval > 255 else "u1"
    head = "P5\n" + "".join(f"# {c}\n" for c in comments) + f"{arr.shape[1]} {arr.shape[0]}\n{maxval}\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        fh.write(np.clip(np.rint(arr), 0, maxval).astype(dtype).tobytes())
    return path


def _pgm_tokens(data: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DomainError("truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))
    return tokens, pos + 1


def read_pgm(path):
    """Read a P2 (ASCII) or P5 (binary) PGM; returns ``(array, maxval)``."""
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pgm_tokens(data)
    w, h, maxval = int(w), int(h), int(maxval)
    if magic == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        arr = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    elif magic == "P2":
        body = b" ".join(line.split(b"#")[0] for line in data[pos:].splitlines())
        arr = np.array(body.split()[: w * h], dtype=int).reshape(h, w)
    else:
        raise DomainError(f"unsupported image type {magic!r}; expected a PGM (P2/P5)")
    return arr.astype(np.int64), maxval


def read_mask(path, grid: Optional[GridSpec] = None) -> Mask:
    """Binary mask from a PGM, thresholded at half of full scale (bright = object)."""
    arr, maxval = read_pgm(path)
    pix = arr >= 0.5 * maxval
    if grid is None:
        grid = GridSpec(width=arr.shape[1], height=arr.shape[0], speckle_radius=max(0.5, min(min(arr.shape) / 4, 4.0)))
    if pix.shape != grid.shape:
        raise ConfigurationError(f"mask {path} is {pix.shape[1]}x{pix.shape[0]}, grid is {grid.width}x{grid.height}")
    return Mask(grid, pix)


def write_mask(path, mask) -> Path:
    pixels = mask.pixels if hasattr(mask, "pixels") else np.asarray(mask, dtype=bool)
    return write_pgm(path, pixels.astype(np.uint8) * 255, maxval=255)


def write_map_image(path, cmap: CorrelationMap, lo: Optional[float] = None, hi: Optional[float] = None,
                    header: Optional[Mapping] = None) -> Path:
    """16-bit PGM of the map scaled to ``[lo, hi]`` (default: its min/max).

    The scale goes to a sidecar ``<name>.scale.txt`` so grey levels can be
    mapped back to correlation values.
    """
    path = Path(path)
    lo = float(cmap.values.min()) if lo is None else float(lo)
    hi = float(cmap.values.max()) if hi is None else float(hi)
    write_pgm(path, cmap.scaled_for_display(lo, hi) * 65535, maxval=65535)
    sidecar = path.with_name(path.name + ".scale.txt")
    lines = _comment_lines(header) + [
        f"kind = {cmap.kind.value}",
        f"min_value = {lo:.9g}",
        f"max_value = {hi:.9g}",
        "grey_levels = 65535",
        "value = min_value + grey / grey_levels * (max_value - min_value)",
    ]
    sidecar.write_text("\n".join(lines) + "\n")
    return path


# --- sweeps --------------------------------------------------------------------

SWEEP_COLUMNS = ("ratio", "source", "method", "contrast", "snr", "n_frames", "seed")


def write_sweep_csv(path, records: Iterable, fits: Optional[Mapping] = None,
                    header: Optional[Mapping] = None, flagged=()) -> Path:
    """Sweep records as CSV; power-law fits follow as ``# fit ...`` trailer lines.

    Fits whose key is in ``flagged`` carry ``flag=exception``, the others ``flag=none``.
    """
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in _comment_lines(header):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for rec in records:
            writer.writerow([f"{rec.ratio:.9g}", rec.source.value, rec.method.value,
                             f"{rec.contrast:.9g}", f"{rec.snr:.9g}", rec.n_frames, rec.seed])
        for (source, method, quantity), fit in (fits or {}).items():
            fh.write(f"# fit source={source.value} method={method.value} quantity={quantity} "
                     f"a={fit.a:.9g} b={fit.b:.9g} residual={fit.residual:.9g} "
                     f"flag={'exception' if (source, method, quantity) in flagged else 'none'}\n")
    return path


def read_sweep_csv(path):
    """Return ``(rows, fits)``: dict rows and parsed fit trailer dicts."""
    rows, fits = [], []
    with open(path, newline="") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("# fit "):
                fits.append(dict(item.split("=", 1) for item in line[6:].split()))
            elif not line.startswith("#"):
                data_lines.append(line)
    for row in csv.DictReader(data_lines):
        rows.append(row)
    return rows, fits


# --- manifest ------------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class Manifest:
    """``manifest.txt`` in an output directory: one line per artifact.

    Each line is ``<relative path>  sha256=<file digest>  config=<config digest>``;
    re-registering a path replaces its line.
    """

    def __init__(self, directory):
        self.path = Path(directory) / "manifest.txt"

    def entries(self) -> dict:
        if not self.path.exists():
            return {}
        out = {}
        for line in self.path.read_text().splitlines():
            if line and not line.startswith("#"):
                name, *fields = line.split()
                out[name] = dict(f.split("=", 1) for f in fields)
        return out

    def add(self, artifact, config_digest: str):
        artifact = Path(artifact)
        entries = self.entries()
        entries[artifact.relative_to(self.path.parent).as_posix()] = {
            "sha256": file_digest(artifact), "config": config_digest}
        lines = ["# artifact  sha256  config-digest"]
        for name in sorted(entries):
            e = entries[name]
            lines.append(f"{name}  sha256={e['sha256']}  config={e['config']}")
        self.path.write_text("\n".join(lines) + "\n")
