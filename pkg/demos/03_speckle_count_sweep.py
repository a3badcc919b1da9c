"""Contrast and SNR of ghost images versus the number of speckles on the object.

For each source the speckle size is calibrated so that the object covers
the requested number of speckle areas, GI and DGI maps are computed, and
power laws are fitted to C and SNR.  The defaults take a few minutes;
``--frames 10000 --grid 128`` reproduces the full-size run.

    python3 demos/03_speckle_count_sweep.py [--frames N] [--grid SIZE]
"""

import argparse

from ghostspeckle import GridSpec, SourceSpec
from ghostspeckle.masks import square_mask
from ghostspeckle.metrics import fit_sweep, flag_exceptions, sweep_speckle_count

parser = argparse.ArgumentParser(description="C and SNR versus object/speckle area ratio")
parser.add_argument("--frames", type=int, default=2000)
parser.add_argument("--grid", type=int, default=96)
parser.add_argument("--object", type=int, default=16, help="side of the square object in pixels")
args = parser.parse_args()

grid = GridSpec(args.grid, args.grid, speckle_radius=4)
mask = square_mask(grid, args.object)
ratios = [1, 2, 4, 8, 16]

records = []
for spec in (SourceSpec.thermal(), SourceSpec.case_a(), SourceSpec.case_b()):
    recs = sweep_speckle_count(spec, grid, mask, ratios, args.frames, master_seed=11)
    records += recs
    print(f"\n{spec.kind.value}")
    print(f"{'ratio':>7s} {'method':>6s} {'C':>8s} {'SNR':>8s}")
    for r in recs:
        print(f"{r.ratio:7.2f} {r.method.value:>6s} {r.contrast:8.4f} {r.snr:8.3f}")

fits = fit_sweep(records)
flagged = flag_exceptions(fits)
print("\npower-law fits  y = a * ratio**b")
for (source, method, quantity), fit in fits.items():
    note = "  <- differs from the other curves" if (source, method, quantity) in flagged else ""
    print(f"{source.value:8s} {method.value:4s} {quantity:9s} a = {fit.a:8.4f}  b = {fit.b:+.3f}{note}")
