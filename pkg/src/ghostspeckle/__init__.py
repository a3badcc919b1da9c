"""Ghost imaging and differential ghost imaging with thermal and superthermal light."""

from .errors import AnalysisError, ConfigurationError, DomainError, NegativeContrastWarning
from .photostatistics import (
    IntensitySample,
    SourceKind,
    SourceSpec,
    bessel_k,
    estimate_g2,
    g2_case_a,
    g2_case_b,
    g2_thermal,
    pdf_case_a,
    pdf_case_b,
    pdf_thermal,
    sample_intensity,
)
from .specklefield import (
    Frame,
    FrameEnsemble,
    GridSpec,
    PinholeSpec,
    ScattererCloud,
    apply_pinhole,
    generate_ensemble,
    measure_speckle_area,
    scatter_speckled_speckle,
    second_harmonic,
    synthesize_thermal_frame,
)
from .correlation import (
    CorrelationMap,
    MapKind,
    Mask,
    Region,
    autocorrelation_fft,
    correlate,
    differential_ghost_image,
    ghost_image,
    pixel_correlation,
)
from .metrics import (
    Method,
    MetricsRecord,
    PowerLawFit,
    contrast,
    fit_power_law,
    snr,
    sweep_speckle_count,
)

__version__ = "0.1.0"
