"""
Beam patterns of the two reference arrays
=========================================

The compact tiling packs eight 4x4 modules edge to edge; the naive diamond
spreads them out until the DoA beamwidth is 7.9 degrees.  Both patterns are
shown on the expanded UV grid (rho = 1.5), which covers every steering
direction inside the 30 degree region of interest at once.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sparse_subarrays import beampattern as bp
from sparse_subarrays.benchmarks import compact_array, naive_array
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array

layout = build_subarray_layout()
arrays = {
    "compact": expand_super_array(compact_array(layout), layout),
    "naive": expand_super_array(naive_array(layout, 7.9), layout, check=False),
}

###############################################################################
# Attributes first; the pattern is sampled on a 512 x 512 grid.

fig, axes = plt.subplots(2, 2, figsize=(9, 8), layout="constrained")
for (name, D), (ax_d, ax_p) in zip(arrays.items(), axes):
    attrs = bp.attributes_from_positions(D, 512)
    print(name, attrs.csv_row())
    ax_d.plot(D[:, 0], D[:, 1], ".", ms=3)
    ax_d.set_aspect("equal")
    ax_d.set_title(f"{name}: {len(D)} elements")
    ax_d.set_xlabel("x [wavelengths]")

    field = bp.evaluate_pattern(D, 512, bp.ebp_rho(30.0))
    R = np.where(field.disc_mask, field.samples, np.nan)
    u = bp.uv_axis(512)
    im = ax_p.imshow(10 * np.log10(R), extent=(u[0], u[-1], u[0], u[-1]), origin="lower",
                     vmin=-30, vmax=0, cmap="viridis")
    ax_p.set_title(f"BW {attrs.bw_doa:.1f} deg, MSLL {attrs.msll:.1f} dB")
    ax_p.set_xlabel("u (expanded)")
fig.colorbar(im, ax=axes[:, 1], label="dB")
fig.savefig("benchmark_patterns.png", dpi=120)
