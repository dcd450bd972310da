"""
Dictionary search, selection and refinement
===========================================

A small search on the default 20 x 20 wavelength grid (1 wavelength pitch).
The dictionary is scored once; each weight set then picks its optimum and
refines it locally.  The scatter shows where the two picks sit in the
(BW, MSLL) cloud of the dictionary.
"""
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from sparse_subarrays.beampattern import attributes_from_positions
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array, make_design_grid
from sparse_subarrays.placement import (ObjectiveWeights, build_dictionary, local_refine,
                                        select_optimum)

layout = build_subarray_layout()
grid = make_design_grid(20.0, pitch=1.0)

t0 = time.perf_counter()
d = build_dictionary(grid, layout, 8, n_init=4, seed=0, n_pattern=256)
print(f"{len(d)} configurations, layers {d.layer_sizes}, {time.perf_counter() - t0:.1f} s")

fig, (ax, ax_t) = plt.subplots(1, 2, figsize=(11, 4.5))
ax.scatter(d.bw, d.msll, s=3, c="0.7", label="dictionary")

for name, w in (("(1, 1, 1)", ObjectiveWeights(1, 1, 1)), ("(1, .1, .1)", ObjectiveWeights(1, .1, .1))):
    sel, _ = select_optimum(d, w, layout)
    ref = local_refine(sel, layout, w, d.ranges, pitch=grid.pitch)
    a0 = attributes_from_positions(expand_super_array(sel, layout), 512, with_directivity=False)
    a1 = attributes_from_positions(expand_super_array(ref.config, layout), 512, with_directivity=False)
    print(name, "selected", a0.csv_row(), "\n", name, "refined ", a1.csv_row())
    ax.plot([a0.bw_doa, a1.bw_doa], [a0.msll, a1.msll], "o-", label=name)
    ax_t.step(range(len(ref.trace)), [r["cost"] for r in ref.trace], where="post", label=name)

ax.set_xlabel("BW DoA [deg]")
ax.set_ylabel("MSLL [dB]")
ax.legend()
ax_t.set_xlabel("accepted move")
ax_t.set_ylabel("weighted cost")
ax_t.legend()
fig.tight_layout()
fig.savefig("design_search.png", dpi=120)
