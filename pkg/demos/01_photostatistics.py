"""Intensity statistics of the three light sources.

Draws single-point intensities for thermal light, scattered speckle (case A)
and second-harmonic light (case B), then compares the sampled g2 and the
histograms with the analytic densities.

    python3 demos/01_photostatistics.py [--samples N]
"""

import argparse

import numpy as np
from scipy import integrate

from ghostspeckle import SourceSpec, estimate_g2, pdf_case_a, pdf_case_b, pdf_thermal, sample_intensity

parser = argparse.ArgumentParser(description="intensity statistics of the three sources")
parser.add_argument("--samples", type=int, default=200_000)
args = parser.parse_args()

specs = {
    "thermal": SourceSpec.thermal(),
    "case A mu_f=1 mu_s=1": SourceSpec.case_a(mu_f=1, mu_s=1),
    "case A mu_f=1 mu_s=5": SourceSpec.case_a(mu_f=1, mu_s=5),
    "case B mu=1": SourceSpec.case_b(mu=1),
    "case B mu=4": SourceSpec.case_b(mu=4),
}
samples = {name: sample_intensity(spec, args.samples, seed=i) for i, (name, spec) in enumerate(specs.items())}

print(f"{'source':22s} {'g2 analytic':>12s} {'g2 sampled':>12s}")
for name, spec in specs.items():
    print(f"{name:22s} {spec.g2:12.4f} {estimate_g2(samples[name]):12.4f}")

# Probability per intensity bin: sampled fraction next to the integrated density.
# The superthermal sources put far more weight at many times the mean.
densities = {
    "thermal": lambda x: pdf_thermal(x, 1.0),
    "case A mu_f=1 mu_s=1": lambda x: pdf_case_a(x, 1.0, 1, 1),
    "case B mu=1": lambda x: pdf_case_b(x, 1.0, 1, 1.0),
}
edges = [0, 0.25, 0.5, 1, 2, 4, 8, 16, 32]
print("\nP(lo <= I < hi): sampled / from density")
print(f"{'bin':>10s}" + "".join(f"{name:>24s}" for name in densities))
for lo, hi in zip(edges[:-1], edges[1:]):
    row = f"{f'[{lo},{hi})':>10s}"
    for name, pdf in densities.items():
        v = samples[name].values
        expected = integrate.quad(pdf, lo, hi, limit=200)[0]
        row += f"{np.mean((v >= lo) & (v < hi)):>14.4f} / {expected:<7.4f}"
    print(row)
