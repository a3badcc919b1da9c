"""Intensity statistics of thermal and superthermal light.

Three sources are modelled:

* ``THERMAL`` -- exponential intensity distribution (a single speckle of
  pseudo-thermal light).
* ``CASE_A`` -- speckled speckle: the product of two independent gamma
  variates with ``mu_f`` and ``mu_s`` modes (K-distribution).
* ``CASE_B`` -- second harmonic of a thermal field with ``mu`` modes,
  ``I = k * I_F**2`` with ``I_F`` gamma distributed.

Besides the densities and their g2 values, the module has direct samplers
built from gamma variates.  They do not go through the field simulation and
serve as an independent statistical reference for it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .errors import AnalysisError, DomainError

__all__ = [
    "SourceKind",
    "SourceSpec",
    "IntensitySample",
    "pdf_thermal",
    "pdf_case_a",
    "pdf_case_b",
    "g2_case_a",
    "g2_case_b",
    "g2_thermal",
    "bessel_k",
    "sample_intensity",
    "estimate_g2",
]


class SourceKind(str, enum.Enum):
    THERMAL = "thermal"
    CASE_A = "case_a"
    CASE_B = "case_b"

    @classmethod
    def parse(cls, value) -> "SourceKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("-", "_")
        aliases = {"a": "case_a", "casea": "case_a", "b": "case_b", "caseb": "case_b"}
        text = aliases.get(text, text)
        try:
            return cls(text)
        except ValueError:
            raise DomainError(f"unknown source kind {value!r}") from None


def _check_positive(name, value):
    if value is None or not np.isfinite(value) or value <= 0:
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def _check_modes(name, value):
    if value is None or not np.isfinite(value) or value < 1:
        raise DomainError(f"{name} must be a finite mode count >= 1, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class SourceSpec:
    """Light source and its statistical parameters.

    Only the parameters relevant to ``kind`` are kept; the others are set to
    ``None``.  For ``CASE_B`` the mean intensity is derived from the
    fundamental, ``<I> = k <I_F>**2 (1 + 1/mu)``, and cannot be given.
    Use the :meth:`thermal`, :meth:`case_a` and :meth:`case_b` constructors.
    """

    kind: SourceKind
    mean_intensity: Optional[float] = None
    mu_f: Optional[float] = None
    mu_s: Optional[float] = None
    mu: Optional[float] = None
    k: Optional[float] = None
    mean_fund: Optional[float] = None

    def __post_init__(self):
        kind = SourceKind.parse(self.kind)
        set_ = lambda name, value: object.__setattr__(self, name, value)  # noqa: E731
        set_("kind", kind)
        if kind is SourceKind.CASE_B:
            if self.mean_intensity is not None:
                raise DomainError("mean intensity of case B is derived from mean_fund, mu and k")
            mu = _check_modes("mu", 1.0 if self.mu is None else self.mu)
            k = _check_positive("k", 1.0 if self.k is None else self.k)
            fund = _check_positive("mean_fund", 1.0 if self.mean_fund is None else self.mean_fund)
            set_("mu", mu)
            set_("k", k)
            set_("mean_fund", fund)
            set_("mean_intensity", k * fund**2 * (1.0 + 1.0 / mu))
            set_("mu_f", None)
            set_("mu_s", None)
            return
        mean = _check_positive("mean_intensity", 1.0 if self.mean_intensity is None else self.mean_intensity)
        set_("mean_intensity", mean)
        set_("mu", None)
        set_("k", None)
        set_("mean_fund", None)
        if kind is SourceKind.CASE_A:
            set_("mu_f", _check_modes("mu_f", 1.0 if self.mu_f is None else self.mu_f))
            set_("mu_s", _check_modes("mu_s", 1.0 if self.mu_s is None else self.mu_s))
        else:
            set_("mu_f", None)
            set_("mu_s", None)

    @classmethod
    def thermal(cls, mean_intensity: float = 1.0) -> "SourceSpec":
        return cls(SourceKind.THERMAL, mean_intensity=mean_intensity)

    @classmethod
    def case_a(cls, mean_intensity: float = 1.0, mu_f: float = 1.0, mu_s: float = 1.0) -> "SourceSpec":
        return cls(SourceKind.CASE_A, mean_intensity=mean_intensity, mu_f=mu_f, mu_s=mu_s)

    @classmethod
    def case_b(cls, mean_fund: float = 1.0, mu: float = 1.0, k: float = 1.0) -> "SourceSpec":
        return cls(SourceKind.CASE_B, mu=mu, k=k, mean_fund=mean_fund)

    @property
    def g2(self) -> float:
        """Analytic zero-lag g2 of a single detection mode."""
        if self.kind is SourceKind.THERMAL:
            return g2_thermal()
        if self.kind is SourceKind.CASE_A:
            return g2_case_a(self.mu_f, self.mu_s)
        return g2_case_b(self.mu)

    def pdf(self, i):
        if self.kind is SourceKind.THERMAL:
            return pdf_thermal(i, self.mean_intensity)
        if self.kind is SourceKind.CASE_A:
            return pdf_case_a(i, self.mean_intensity, self.mu_f, self.mu_s)
        return pdf_case_b(i, self.mean_fund, self.mu, self.k)

    def as_dict(self) -> dict:
        out = {"source": self.kind.value}
        for name in ("mean_intensity", "mu_f", "mu_s", "mu", "k", "mean_fund"):
            value = getattr(self, name)
            if value is not None and not (self.kind is SourceKind.CASE_B and name == "mean_intensity"):
                out[name] = value
        return out


@dataclass(frozen=True)
class IntensitySample:
    """Intensity realisations drawn with a known seed."""

    values: np.ndarray
    seed: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise DomainError("an intensity sample is a non-empty 1-D sequence")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("intensities must be finite and non-negative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def mean(self) -> float:
        return float(self.values.mean())


def _intensity_arg(i):
    arr = np.asarray(i, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("intensity must be non-negative")
    return arr


def _result(arr, scalar):
    return float(arr) if scalar else arr


def pdf_thermal(i, mean: float):
    """Exponential density ``exp(-i/mean)/mean`` of single-mode thermal light."""
    mean = _check_positive("mean", mean)
    arr = _intensity_arg(i)
    return _result(np.exp(-arr / mean) / mean, arr.ndim == 0)


def pdf_case_a(i, mean: float, mu_f: float, mu_s: float):
    """K-distribution of speckled-speckle light.

    Product of two independent unit-mean gamma variates with shapes ``mu_f``
    and ``mu_s``, scaled to ``mean``.  Evaluated in log space with the
    exponentially scaled Bessel function so large arguments do not underflow
    before the prefactor is applied.

    At ``i == 0`` the density is finite only when ``min(mu_f, mu_s) > 1`` or
    the orders differ; for ``mu_f == mu_s == 1`` it diverges logarithmically
    and :class:`OverflowError` is raised.
    """
    mean = _check_positive("mean", mean)
    mu_f = _check_modes("mu_f", mu_f)
    mu_s = _check_modes("mu_s", mu_s)
    arr = _intensity_arg(i)
    nu = abs(mu_f - mu_s)
    prod = mu_f * mu_s
    log_norm = (
        math.log(2.0)
        + 0.5 * (mu_f + mu_s) * math.log(prod)
        - math.log(mean)
        - math.lgamma(mu_f)
        - math.lgamma(mu_s)
    )
    x = arr / mean
    out = np.empty_like(x)
    zero = x == 0
    if np.any(zero):
        lo = min(mu_f, mu_s)
        if lo > 1:
            out[zero] = 0.0
        elif nu > 0:
            out[zero] = prod**lo * math.gamma(nu) / (mean * math.gamma(mu_f) * math.gamma(mu_s))
        else:
            raise OverflowError("case A density diverges at i = 0 for mu_f = mu_s = 1")
    pos = ~zero
    if np.any(pos):
        xp = x[pos]
        z = 2.0 * np.sqrt(prod * xp)
        kve = special.kve(nu, z)
        if np.any(~np.isfinite(kve)):
            raise ArithmeticError("Bessel K evaluation failed")
        with np.errstate(divide="ignore"):
            log_p = log_norm + 0.5 * (mu_f + mu_s - 2.0) * np.log(xp) + np.log(kve) - z
        out[pos] = np.exp(log_p)
    return _result(out, arr.ndim == 0)


def pdf_case_b(i, mean_fund: float, mu: float, k: float):
    """Density of second-harmonic light from a ``mu``-mode thermal fundamental.

    With ``b = sqrt(i/k)`` the fundamental ``b`` is gamma distributed with
    shape ``mu`` and mean ``mean_fund``; the factorial of the integer-mode
    formula is generalised to ``Gamma(mu)``.  The density diverges at ``i = 0``
    when ``mu < 2``; that case raises :class:`OverflowError`.
    """
    mean_fund = _check_positive("mean_fund", mean_fund)
    mu = _check_modes("mu", mu)
    k = _check_positive("k", k)
    arr = _intensity_arg(i)
    scale = mean_fund / mu
    log_norm = -math.log(2.0 * k) - math.lgamma(mu) - mu * math.log(scale)
    out = np.empty_like(arr)
    zero = arr == 0
    if np.any(zero):
        if mu < 2:
            raise OverflowError("case B density diverges at i = 0 for mu < 2")
        out[zero] = math.exp(log_norm) if mu == 2 else 0.0
    pos = ~zero
    if np.any(pos):
        b = np.sqrt(arr[pos] / k)
        out[pos] = np.exp(log_norm + (mu - 2.0) * np.log(b) - b / scale)
    return _result(out, arr.ndim == 0)


def g2_thermal() -> float:
    return 2.0


def g2_case_a(mu_f: float, mu_s: float) -> float:
    """Zero-lag g2 of speckled-speckle light, ``(1 + 1/mu_f)(1 + 1/mu_s)``."""
    mu_f = _check_modes("mu_f", mu_f)
    mu_s = _check_modes("mu_s", mu_s)
    return (1.0 + 1.0 / mu_f) * (1.0 + 1.0 / mu_s)


def g2_case_b(mu: float) -> float:
    """Zero-lag g2 of second-harmonic light, ``1 + 2(2mu + 3)/(mu(mu + 1))``."""
    mu = _check_modes("mu", mu)
    return 1.0 + 2.0 * (2.0 * mu + 3.0) / (mu * (mu + 1.0))


def bessel_k(order: float, x):
    """Modified Bessel function of the second kind, ``K_order(x)``.

    Thin wrapper over :func:`scipy.special.kv` with domain checks.  Values
    underflow to 0 for large ``x`` (``K_0(750)`` is below the smallest double).
    """
    if not np.isfinite(order) or order < 0:
        raise DomainError(f"order must be a finite non-negative number, got {order!r}")
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("bessel_k requires x > 0")
    out = special.kv(order, arr)
    if np.any(np.isnan(out)):
        raise ArithmeticError(f"K_{order} evaluation failed")
    return _result(out, arr.ndim == 0)


def sample_intensity(spec: SourceSpec, n: int, seed: int) -> IntensitySample:
    """Draw ``n`` intensities from the source distribution directly.

    Thermal: exponential.  Case A: ``<I> (G1/mu_f)(G2/mu_s)`` with independent
    unit-scale gamma variates.  Case B: ``k I_F**2`` with ``I_F`` gamma of shape
    ``mu`` and mean ``mean_fund``.
    """
    if int(n) != n or n < 1:
        raise DomainError("n must be a positive integer")
    rng = np.random.default_rng(seed)
    n = int(n)
    if spec.kind is SourceKind.THERMAL:
        values = rng.exponential(spec.mean_intensity, size=n)
    elif spec.kind is SourceKind.CASE_A:
        g1 = rng.gamma(spec.mu_f, 1.0, size=n) / spec.mu_f
        g2 = rng.gamma(spec.mu_s, 1.0, size=n) / spec.mu_s
        values = spec.mean_intensity * g1 * g2
    else:
        fund = rng.gamma(spec.mu, spec.mean_fund / spec.mu, size=n)
        values = spec.k * fund**2
    return IntensitySample(values, seed)


def estimate_g2(sample) -> float:
    """Moment estimate ``mean(I**2) / mean(I)**2``."""
    values = sample.values if isinstance(sample, IntensitySample) else np.asarray(sample, dtype=float)
    values = np.ravel(values)
    if values.size < 2:
        raise DomainError("need at least two intensities to estimate g2")
    m1 = values.mean()
    if m1 == 0:
        raise AnalysisError("g2 is undefined for an all-zero sample")
    return float(np.mean(values * values) / (m1 * m1))
