"""Cramér-Rao and Ziv-Zakai bounds for single-source direction estimation.

The direction is the directional-cosine pair ``u = (u, v)``.  Errors are
reported as ``sqrt(tr(R_eps) / 2)``, the RMSE along an arbitrary direction.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special, stats

from .beampattern import PatternField, mainlobe_ellipse
from .errors import DegenerateGeometry, InvalidArgument, NumericalFailure
from .geometry import WAVENUMBER

PRIOR_FIM = 1.343  # uniform DoA prior on the 30 degree region of interest
_SERIES_SWITCH = 30.0


@dataclass(frozen=True)
class FisherInfo:
    J_F: np.ndarray
    J_P: np.ndarray
    snr: float

    @property
    def total(self):
        return self.J_F + self.J_P


def _centered(D):
    D = np.asarray(D, dtype=float).reshape(-1, 2)
    return D - D.mean(axis=0)


def fisher_information(D, snr, prior=PRIOR_FIM):
    """``J_F = 2 k^2 snr D^T D`` for centered positions, plus the prior term.

    Args:
        D: element positions (re-centered here).
        snr: linear per-element SNR ``|alpha|^2 / sigma^2``.
        prior: scalar multiple of the identity, a 2x2 matrix, or ``None``.
    """
    if snr < 0:
        raise InvalidArgument("snr must be non-negative")
    D = _centered(D)
    J_F = 2 * WAVENUMBER ** 2 * snr * (D.T @ D)
    if prior is None:
        J_P = np.zeros((2, 2))
    elif np.isscalar(prior):
        J_P = prior * np.eye(2)
    else:
        J_P = np.asarray(prior, dtype=float).reshape(2, 2)
    return FisherInfo(J_F, J_P, float(snr))


def crb_rmse(D, snr, prior=PRIOR_FIM):
    """Bayesian CRB on the RMSE, ``sqrt(tr((J_F + J_P)^-1) / 2)``."""
    J = fisher_information(D, snr, prior).total
    if abs(np.linalg.det(J)) <= 1e-300 or np.linalg.cond(J) > 1e15:
        raise DegenerateGeometry("Fisher information is singular")
    return float(np.sqrt(np.trace(np.linalg.inv(J)) / 2))


def crb_from_eigenvalues(D, snr):
    """Prior-free CRB through the eigenvalues of ``D^T D``: ``(1/lam1 + 1/lam2) / (4 k^2 snr)``."""
    lam = np.linalg.eigvalsh(_centered(D).T @ _centered(D))
    return float(np.sqrt((1 / lam[0] + 1 / lam[1]) / (4 * WAVENUMBER ** 2 * snr)))


# --- noncoherent detection -----------------------------------------------------

def marcum_q1(a, b):
    """First-order Marcum Q function ``Q1(a, b)``.

    Evaluated as the survival function of a noncentral chi-square variable
    with two degrees of freedom and noncentrality ``a^2`` at ``b^2``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return stats.ncx2.sf(b ** 2, 2, a ** 2) * np.ones(np.broadcast(a, b).shape)


def _pe_series(a, b, ab):
    """``exp(-(b-a)^2/2) [I0e(ab)/2 + sum_k (a/b)^k Ike(ab)]`` for ``ab <= 30``."""
    K = int(np.ceil(_SERIES_SWITCH + 12 * np.sqrt(_SERIES_SWITCH) + 40))
    k = np.arange(1, K + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(b > 0, a / b, 0.0)
    terms = q[:, None] ** k[None, :] * special.ive(k[None, :], ab[:, None])
    s = 0.5 * special.ive(0, ab) + terms.sum(axis=1)
    return np.exp(-0.5 * (b - a) ** 2) * s


def noncoherent_pe(gammaN, r):
    """Error probability of the optimal noncoherent binary detector.

    ``P = Q1(a, b) - exp(-(a^2 + b^2)/2) I0(ab) / 2`` with
    ``a, b = sqrt(gammaN/2 * (1 -+ sqrt(1 - r^2)))``.

    For ``ab <= 30`` the exponentially scaled Bessel series is summed
    directly (no cancellation); above that the Marcum function is used with
    a scaled Bessel correction.

    Args:
        gammaN: ``snr * N`` (>= 0), scalar.
        r: correlation magnitude(s) in ``[0, 1]``.

    Returns:
        probability (array shaped like ``r``), clamped to ``[0, 1/2]``.
    """
    if gammaN < 0:
        raise InvalidArgument("gammaN must be non-negative")
    r = np.asarray(r, dtype=float)
    if np.any((r < -1e-12) | (r > 1 + 1e-12)):
        raise InvalidArgument("correlation must lie in [0, 1]")
    rr = np.clip(r, 0.0, 1.0).ravel()
    root = np.sqrt(1.0 - rr ** 2)
    a = np.sqrt(0.5 * gammaN * (1.0 - root))
    b = np.sqrt(0.5 * gammaN * (1.0 + root))
    ab = a * b
    out = np.empty_like(rr)
    small = ab <= _SERIES_SWITCH
    if small.any():
        out[small] = _pe_series(a[small], b[small], ab[small])
    big = ~small
    if big.any():
        ab_, a_, b_ = ab[big], a[big], b[big]
        out[big] = marcum_q1(a_, b_) - 0.5 * np.exp(-0.5 * (b_ - a_) ** 2) * special.ive(0, ab_)
    out[rr >= 1.0] = 0.5
    return np.clip(out, 0.0, 0.5).reshape(r.shape)


# --- Ziv-Zakai -------------------------------------------------------------------

def default_h_grid():
    """Quadrature nodes on ``[0, 1]``: a uniform grid plus a geometric grid near zero.

    The geometric part resolves the high-SNR regime, where the detection
    error drops to zero at very small separations.
    """
    h = np.concatenate([[0.0], np.linspace(0, 1, 512), np.geomspace(1e-5, 0.1, 512)])
    return np.unique(h)


def _correlation(D, pts):
    """``|sum_i exp(j k d_i . delta)| / N`` at each row of ``pts``."""
    ph = WAVENUMBER * (pts @ D.T)
    c = np.cos(ph).sum(axis=-1)
    s = np.sin(ph).sum(axis=-1)
    return np.hypot(c, s) / D.shape[0]


def max_correlation_profile(D, a_dir, h_grid=None, n_line=1024, refine=True):
    """Largest correlation magnitude on each chord ``{delta : a^T delta = h, |delta| <= 1}``.

    Args:
        D: element positions, or a :class:`PatternField` (its positions are
            used when present, otherwise the sampled pattern is interpolated).
        a_dir: unit 2-vector.
        h_grid: offsets in ``[0, 1]``.
        n_line: samples per chord for the discrete search.
        refine: polish the best sample with a bounded scalar search.

    Returns:
        (h_grid, r_max) arrays.
    """
    h_grid = default_h_grid() if h_grid is None else np.asarray(h_grid, dtype=float)
    a = np.asarray(a_dir, dtype=float)
    a = a / np.linalg.norm(a)
    perp = np.array([-a[1], a[0]])
    if isinstance(D, PatternField):
        if D.positions is None:
            return h_grid, _profile_from_samples(D, a, perp, h_grid, n_line)
        D = D.positions
    D = _centered(D)
    # odd count so the chord midpoint (delta = h a) is always sampled
    s = np.linspace(-1.0, 1.0, n_line | 1)
    out = np.empty(len(h_grid))
    block = max(1, 2 ** 21 // (n_line * len(D)))
    for i0 in range(0, len(h_grid), block):
        h = h_grid[i0:i0 + block]
        half = np.sqrt(np.clip(1 - h ** 2, 0, None))
        t = half[:, None] * s[None, :]
        pts = h[:, None, None] * a + t[..., None] * perp
        r = _correlation(D, pts)
        j = np.argmax(r, axis=1)
        best = r[np.arange(len(h)), j]
        if refine:
            step = 2 * half / (len(s) - 1)
            for m in range(len(h)):
                if half[m] == 0:
                    continue
                lo = max(-half[m], t[m, j[m]] - step[m])
                hi = min(half[m], t[m, j[m]] + step[m])
                res = optimize.minimize_scalar(
                    lambda x: -_correlation(D, (h[m] * a + x * perp)[None])[0],
                    bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
                best[m] = max(best[m], -res.fun)
        out[i0:i0 + block] = best
    return h_grid, np.clip(out, 0.0, 1.0)


def _profile_from_samples(field, a, perp, h_grid, n_line):
    from scipy.interpolate import RegularGridInterpolator
    if abs(field.rho - 1.0) > 1e-12:
        raise InvalidArgument("ZZB needs an unexpanded (rho = 1) pattern")
    amp = np.sqrt(np.clip(field.samples, 0, None))
    interp = RegularGridInterpolator((field.axis, field.axis), amp,
                                     bounds_error=False, fill_value=None)
    s = np.linspace(-1.0, 1.0, n_line)
    out = np.empty(len(h_grid))
    for m, h in enumerate(h_grid):
        half = np.sqrt(max(0.0, 1 - h * h))
        pts = h * a + (half * s)[:, None] * perp
        out[m] = interp(pts[:, ::-1]).max()
    out[h_grid == 0] = 1.0
    return np.clip(out, 0.0, 1.0)


def valley_fill(values):
    """Nonincreasing envelope: ``V[i] = max(values[i:])``."""
    return np.maximum.accumulate(np.asarray(values, dtype=float)[::-1])[::-1]


def zzb_directional(a_dir, D, gammaN, h_grid=None, n_line=1024, profile=None):
    """Ziv-Zakai bound on ``a^T R_eps a`` for a DoA uniform on the unit disc.

    ``int_0^1 V{Pe(h)} h dh`` where ``Pe(h)`` is the noncoherent detection
    error for the most correlated pair of directions at offset ``h`` along
    ``a`` and ``V`` is valley filling.

    Args:
        profile: precomputed ``(h_grid, r_max)`` from
            :func:`max_correlation_profile`, reused across SNRs.
    """
    if profile is None:
        profile = max_correlation_profile(D, a_dir, h_grid, n_line)
    h, r = profile
    pe = valley_fill(noncoherent_pe(gammaN, r))
    val = float(np.trapezoid(pe * h, h))
    if not np.isfinite(val) or val < 0:
        raise NumericalFailure("ZZB quadrature produced an invalid value", residual=val)
    return val


def principal_axes(D):
    """Directions of maximum and minimum beamwidth (columns)."""
    return mainlobe_ellipse(D).axes


def zzb_rmse(D, gammaN, axes=None, profiles=None, h_grid=None, n_line=1024):
    """``sqrt((Z(a1) + Z(a2)) / 2)`` along the principal beam axes.

    The division by two matches the RMSE convention of :func:`crb_rmse`.
    """
    if profiles is None:
        axes = principal_axes(D) if axes is None else axes
        profiles = [max_correlation_profile(D, axes[:, i], h_grid, n_line) for i in range(2)]
    z = sum(zzb_directional(None, None, gammaN, profile=p) for p in profiles)
    return float(np.sqrt(z / 2))


@dataclass
class BoundCurve:
    snr_db: np.ndarray
    crb_rmse: np.ndarray
    zzb_rmse: np.ndarray
    threshold_snr: float
    threshold_factor: float = 1.1

    def to_csv(self, path, header=""):
        with open(path, "w", newline="") as fh:
            fh.write(header)
            fh.write(f"# threshold_snr_db={self.threshold_snr}\n")
            w = csv.writer(fh)
            w.writerow(["snr_db", "crb", "zzb"])
            for s, c, z in zip(self.snr_db, self.crb_rmse, self.zzb_rmse):
                w.writerow([f"{s:.4f}", f"{c:.10e}", f"{z:.10e}"])


def zzb_threshold(snr_db, crb, zzb, factor=1.1):
    """Smallest SNR at which ``zzb <= factor * crb`` (NaN if never)."""
    ok = np.asarray(zzb) <= factor * np.asarray(crb)
    return float(np.asarray(snr_db)[np.argmax(ok)]) if ok.any() else float("nan")


def bound_curve(D, snr_db, prior=PRIOR_FIM, h_grid=None, n_line=1024, factor=1.1):
    """CRB and ZZB over an SNR sweep (per-element SNR in dB)."""
    D = _centered(D)
    snr_db = np.asarray(snr_db, dtype=float)
    N = len(D)
    axes = principal_axes(D)
    profiles = [max_correlation_profile(D, axes[:, i], h_grid, n_line) for i in range(2)]
    crb = np.array([crb_rmse(D, 10 ** (s / 10), prior) for s in snr_db])
    zzb = np.array([zzb_rmse(D, N * 10 ** (s / 10), profiles=profiles) for s in snr_db])
    return BoundCurve(snr_db, crb, zzb, zzb_threshold(snr_db, crb, zzb, factor), factor)
