"""
NOMP against the bounds
=======================

Single-source Monte-Carlo RMSE of NOMP on the compact array, next to the CRB
and ZZB, plus the error CCDF at one SNR.
"""
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sparse_subarrays.benchmarks import compact_array
from sparse_subarrays.bounds import bound_curve
from sparse_subarrays.estimation import metrics, run_campaign, to_db
from sparse_subarrays.geometry import build_subarray_layout, expand_super_array

layout = build_subarray_layout()
D = expand_super_array(compact_array(layout), layout)
snr = np.arange(-20.0, 21.0, 4.0)

res = run_campaign(D, snr, 300, K=1, seed=1)
bc = bound_curve(D, snr)

fig, (ax, ax_c) = plt.subplots(1, 2, figsize=(11, 4.5))
ax.plot(snr, to_db(res.rmse), "o-", label="NOMP")
ax.plot(snr, to_db(bc.crb_rmse), "--", label="CRB")
ax.plot(snr, to_db(bc.zzb_rmse), ":", label="ZZB")
ax.set_xlabel("per-element SNR [dB]")
ax.set_ylabel("RMSE [dB]")
ax.legend()

i = int(np.argmin(np.abs(snr + 4)))
_, (t, p) = metrics(res.errors[i])
ax_c.semilogy(t, np.maximum(p, 1e-4))
ax_c.set_xlabel("error [dB]")
ax_c.set_ylabel("P(error > x)")
ax_c.set_title(f"CCDF at {snr[i]:+.0f} dB")
fig.tight_layout()
fig.savefig("rmse.png", dpi=120)
