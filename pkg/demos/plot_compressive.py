"""
Compressive measurements per subarray
=====================================

Each 16-element module is combined into M outputs with random QPSK weights.
Fewer outputs cost about 10 log10(16 / M) dB of SNR; the isometry bracket
shows how far sparse combinations of steering vectors are stretched.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sparse_subarrays.benchmarks import compact_array
from sparse_subarrays.compressive import draw_measurement, isometry_ratio
from sparse_subarrays.estimation import make_steering_dictionary, run_campaign, to_db
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array

layout = build_subarray_layout()
D = expand_super_array(compact_array(layout), layout)
d = make_steering_dictionary(D)
snr = np.arange(-10.0, 21.0, 5.0)

fig, (ax, ax_i) = plt.subplots(1, 2, figsize=(11, 4.5))
full = run_campaign(D, snr, 200, seed=3, dictionary=d)
ax.plot(snr, to_db(full.rmse), "k-", label="M = 16 (full)")
brackets = []
for m in (1, 2, 4, 8):
    P = draw_measurement(8, 16, m, seed=m)
    res = run_campaign(D, snr, 200, seed=3, dictionary=d, Phi=P)
    ax.plot(snr, to_db(res.rmse), "o-", label=f"M = {m}")
    brackets.append(isometry_ratio(P, d, 8, 20000, seed=m))
ax.set_xlabel("per-element SNR [dB]")
ax.set_ylabel("RMSE [dB]")
ax.legend()

lo, hi = np.array(brackets).T
ax_i.vlines([8, 16, 32, 64], lo, hi, lw=6)
ax_i.set_xscale("log", base=2)
ax_i.set_xlabel("total measurements")
ax_i.set_ylabel("isometry ratio [dB], 2K = 8")
fig.tight_layout()
fig.savefig("compressive.png", dpi=120)
