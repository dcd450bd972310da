"""
CRB and Ziv-Zakai bound
=======================

The Ziv-Zakai bound follows the prior-limited error at low SNR and merges
into the CRB above a threshold SNR.  The threshold is where the ZZB first
comes within 10% of the CRB.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sparse_subarrays.benchmarks import compact_array, naive_array
from sparse_subarrays.bounds import bound_curve
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array

layout = build_subarray_layout()
arrays = {
    "compact": expand_super_array(compact_array(layout), layout),
    "naive": expand_super_array(naive_array(layout, 7.9), layout, check=False),
}
snr = np.arange(-25.0, 26.0, 1.0)

fig, ax = plt.subplots(figsize=(6, 4.5))
for name, D in arrays.items():
    bc = bound_curve(D, snr)
    print(f"{name}: threshold {bc.threshold_snr:+.0f} dB")
    line, = ax.plot(snr, 10 * np.log10(bc.zzb_rmse), label=f"{name} ZZB")
    ax.plot(snr, 10 * np.log10(bc.crb_rmse), "--", color=line.get_color(), label=f"{name} CRB")
    ax.axvline(bc.threshold_snr, color=line.get_color(), lw=0.5)
ax.set_xlabel("per-element SNR [dB]")
ax.set_ylabel("RMSE [dB]")
ax.legend()
fig.savefig("bounds.png", dpi=120)
