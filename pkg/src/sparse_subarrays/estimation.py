"""Signal synthesis, single-source MLE and NOMP direction estimation.

Snapshot model: ``x = sum_j alpha_j s(u_j) + z`` with steering vector
``s(u)_i = exp(j k d_i . u)`` and circular complex Gaussian noise of
variance ``sigma2`` per element.  All estimators accept an optional
measurement matrix ``Phi`` (``y = Phi x``); ``Phi=None`` means full
measurements.
"""
import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InfeasibleInstance, InvalidArgument
from .geometry import WAVENUMBER

ROI_THETA_MAX = 30.0


def steering(D, u):
    """Steering vectors, ``(N,)`` for one direction or ``(N, M)`` for ``(M, 2)`` directions."""
    D = np.asarray(D, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.exp(1j * WAVENUMBER * (D @ u.T))


def _apply(Phi, v):
    return v if Phi is None else Phi @ v


def _operator(Phi):
    """Plain matrix (or ``None``) from a matrix or a measurement object."""
    return Phi.operator if hasattr(Phi, "operator") else Phi


@dataclass(frozen=True, eq=False)
class SteeringDictionary:
    """Directions ``grid`` (``(M, 2)``) and their steering matrix ``S`` (``(N, M)``)."""

    grid: np.ndarray
    S: np.ndarray
    positions: np.ndarray

    def measured(self, Phi=None):
        """``(Phi S, column energies)`` for detection."""
        A = _apply(Phi, self.S)
        return A, np.einsum("ij,ij->j", A.conj(), A).real


def make_steering_dictionary(D, spacing=None, roi=None, oversample=4):
    """Square grid of directions covering the region of interest.

    Args:
        D: element positions.
        spacing: grid pitch in directional cosines.  Defaults to the array's
            own minimum half-power beamwidth (in ``u``) divided by ``oversample``.
        roi: radius of the disc to cover (default ``sin(30 deg)``).
    """
    D = np.asarray(D, dtype=float)
    D = D - D.mean(axis=0)
    roi = np.sin(np.deg2rad(ROI_THETA_MAX)) if roi is None else roi
    if spacing is None:
        lam2 = np.linalg.eigvalsh(D.T @ D)[1]
        width = 2 * np.sqrt(len(D) / (2 * WAVENUMBER ** 2 * lam2))
        spacing = width / oversample
    m = int(np.ceil(roi / spacing))
    t = spacing * np.arange(-m, m + 1)
    uu, vv = np.meshgrid(t, t)
    g = np.column_stack([uu.ravel(), vv.ravel()])
    g = g[np.hypot(g[:, 0], g[:, 1]) <= roi + 0.5 * spacing]
    return SteeringDictionary(g, steering(D, g), D)


# --- synthesis ---------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """Source directions ``u`` (``(K, 2)``) and complex gains ``alpha``; source 0 is primary."""

    u: np.ndarray
    alpha: np.ndarray

    @property
    def K(self):
        return len(self.alpha)


@dataclass(frozen=True, eq=False)
class Snapshot:
    x: np.ndarray
    truth: Scenario
    sigma2: float
    seed: object = None


def make_scenario(K, primary_at_broadside=True, min_sep=0.16, interferer_level_db=0.0,
                  seed=None, theta_max=ROI_THETA_MAX, primary_gain=1.0, max_tries=10000):
    """Random source set for one trial.

    Interferer directions are uniform on the spherical cap ``theta <= theta_max``
    and rejection-sampled to lie at least ``min_sep`` from the primary.  All
    gains have uniform random phase; interferer magnitudes are
    ``interferer_level_db`` relative to the primary.
    """
    if K < 1:
        raise InvalidArgument("K must be >= 1")
    rng = np.random.default_rng(seed)
    cos_min = np.cos(np.deg2rad(theta_max))

    def draw():
        ct = rng.uniform(cos_min, 1.0)
        phi = rng.uniform(0, 2 * np.pi)
        st = np.sqrt(1 - ct * ct)
        return np.array([st * np.cos(phi), st * np.sin(phi)])

    u0 = np.zeros(2) if primary_at_broadside else draw()
    us = [u0]
    for _ in range(K - 1):
        for _ in range(max_tries):
            c = draw()
            if np.hypot(*(c - u0)) >= min_sep:
                break
        else:
            raise InfeasibleInstance("could not place interferer at the requested separation")
        us.append(c)
    mags = np.r_[primary_gain, np.full(K - 1, primary_gain * 10 ** (interferer_level_db / 20))]
    alpha = mags * np.exp(2j * np.pi * rng.random(K))
    return Scenario(np.array(us), alpha)


def synthesize(truth, sigma2, D, seed=None):
    """Draw one snapshot ``x = S(u) alpha + z``, ``z ~ CN(0, sigma2 I)``."""
    if sigma2 < 0:
        raise InvalidArgument("sigma2 must be non-negative")
    rng = np.random.default_rng(seed)
    D = np.asarray(D, dtype=float)
    x = steering(D, truth.u) @ truth.alpha
    z = (rng.standard_normal(len(D)) + 1j * rng.standard_normal(len(D))) * np.sqrt(sigma2 / 2)
    return Snapshot(x + z, truth, float(sigma2), seed)


# --- Newton refinement -------------------------------------------------------

def _atom(D, u, Phi):
    s = np.exp(1j * WAVENUMBER * (D @ u))
    ds = (1j * WAVENUMBER) * D.T * s  # 2, N
    dds = -(WAVENUMBER ** 2) * (D.T[:, None, :] * D.T[None, :, :]) * s  # 2, 2, N
    if Phi is not None:
        return Phi @ s, ds @ Phi.T, dds @ Phi.T
    return s, ds, dds


def _concentrated(y, a):
    """Residual energy after the best gain: ``(||y - alpha a||^2, alpha)``."""
    ea = np.vdot(a, a).real
    alpha = np.vdot(a, y) / ea
    e = y - alpha * a
    return np.vdot(e, e).real, alpha


def cost_gradient(u, alpha, y, D, Phi=None):
    """``T = ||y - alpha A(u)||^2``, its gradient and Hessian in ``u`` at fixed ``alpha``."""
    a, da, dda = _atom(D, np.asarray(u, float), Phi)
    e = y - alpha * a
    T = np.vdot(e, e).real
    g = -2 * np.real(alpha * (da @ e.conj()))
    H = 2 * np.real(abs(alpha) ** 2 * (da.conj() @ da.T)) - 2 * np.real(alpha * (dda @ e.conj()))
    return T, g, 0.5 * (H + H.T)


def newton_refine(u, alpha, y, D, Phi=None, max_backtrack=30):
    """One safeguarded Newton step on ``T(u) = ||y - alpha A(u)||^2``.

    The Newton step is taken when the Hessian is positive definite and the
    concentrated cost (gain re-solved in closed form) decreases; otherwise a
    backtracking gradient step is tried.  The gain is re-solved after any
    accepted move.

    Returns:
        ``(u', alpha', moved)``
    """
    u = np.asarray(u, dtype=float)
    T0, alpha0 = _concentrated(y, _apply(Phi, np.exp(1j * WAVENUMBER * (D @ u))))
    _, g, H = cost_gradient(u, alpha0, y, D, Phi)
    if not np.all(np.isfinite(g)) or not np.any(g):
        return u, alpha0, False
    try:
        np.linalg.cholesky(H)
        step = -np.linalg.solve(H, g)
        cand = u + step
        T1, a1 = _concentrated(y, _apply(Phi, np.exp(1j * WAVENUMBER * (D @ cand))))
        if T1 < T0:
            return cand, a1, True
    except np.linalg.LinAlgError:
        pass
    lip = max(np.abs(np.linalg.eigvalsh(H)).max(), 1e-12)
    t = 1.0 / lip
    gg = g @ g
    for _ in range(max_backtrack):
        cand = u - t * g
        T1, a1 = _concentrated(y, _apply(Phi, np.exp(1j * WAVENUMBER * (D @ cand))))
        if T1 <= T0 - 1e-4 * t * gg and T1 < T0:
            return cand, a1, True
        t *= 0.5
    return u, alpha0, False


# --- estimators --------------------------------------------------------------

@dataclass
class EstimationResult:
    u: np.ndarray
    alpha: np.ndarray
    residual_power: float
    history: list

    @property
    def K(self):
        return len(self.alpha)


def _detect(r, A, energy):
    corr = A.conj().T @ r
    score = (corr.real ** 2 + corr.imag ** 2) / energy
    j = int(np.argmax(score))
    return j, corr[j] / energy[j]


def mle_single(x, dictionary, Phi=None, max_iter=50, tol=1e-13, measured=None):
    """Noncoherent single-source MLE: grid argmax of ``|A(u)^H y|^2 / ||A(u)||^2`` then Newton to convergence."""
    D = dictionary.positions
    Phi = _operator(Phi)
    A, energy = dictionary.measured(Phi) if measured is None else measured
    j, alpha = _detect(x, A, energy)
    u = dictionary.grid[j].copy()
    for _ in range(max_iter):
        u_new, alpha, moved = newton_refine(u, alpha, x, D, Phi)
        step = np.hypot(*(u_new - u))
        u = u_new
        if not moved or step < tol:
            break
    return u


def nomp(x, dictionary, K, rounds=3, Phi=None, measured=None):
    """Newtonized orthogonal matching pursuit with known source count.

    Each of the ``K`` iterations detects the strongest grid direction in the
    residual, refines it with one Newton step, then runs ``rounds`` cyclic
    passes of single Newton steps over all detected sources.

    Args:
        x: measurement vector (``Phi @ snapshot`` when ``Phi`` is given).
        dictionary: :class:`SteeringDictionary`.
        K: number of sources.
        rounds: cyclic refinement passes after each detection.
        Phi: measurement matrix or ``None``.
        measured: cached ``dictionary.measured(Phi)``.

    Returns:
        EstimationResult; ``history`` holds the residual power after every
        detection and every accepted refinement step.
    """
    y = np.asarray(x, dtype=complex)
    if K < 1 or K > len(y):
        raise InvalidArgument("K must satisfy 1 <= K <= measurement dimension")
    D = dictionary.positions
    Phi = _operator(Phi)
    A, energy = dictionary.measured(Phi) if measured is None else measured

    def atom(u):
        return _apply(Phi, np.exp(1j * WAVENUMBER * (D @ u)))

    us, alphas = [], []
    r = y.copy()
    hist = [float(np.vdot(r, r).real)]
    for _ in range(K):
        j, a = _detect(r, A, energy)
        u = dictionary.grid[j].copy()
        r = r - a * A[:, j]
        us.append(u)
        alphas.append(a)
        hist.append(float(np.vdot(r, r).real))
        order = [len(us) - 1] + [list(range(len(us)))] * rounds
        for p_list in order:
            for p in ([p_list] if isinstance(p_list, int) else p_list):
                yp = r + alphas[p] * atom(us[p])
                u_new, a_new, moved = newton_refine(us[p], alphas[p], yp, D, Phi)
                if not moved:
                    # the gain is still re-solved for the current direction
                    _, a_new = _concentrated(yp, atom(us[p]))
                r_new = yp - a_new * atom(u_new)
                if np.vdot(r_new, r_new).real <= np.vdot(r, r).real:
                    us[p], alphas[p], r = u_new, a_new, r_new
                    hist.append(float(np.vdot(r, r).real))
    return EstimationResult(np.array(us), np.array(alphas), float(np.vdot(r, r).real), hist)


# --- metrics -----------------------------------------------------------------

def match_errors(u_true, u_hat):
    """Per-truth error magnitudes after the minimum-cost truth/estimate assignment."""
    u_true = np.atleast_2d(u_true)
    u_hat = np.atleast_2d(u_hat)
    cost = np.linalg.norm(u_true[:, None, :] - u_hat[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    err = np.full(len(u_true), np.inf)
    err[rows] = cost[rows, cols]
    return err


def to_db(rmse):
    """RMSE in dB, ``10 log10(rmse)``."""
    with np.errstate(divide="ignore"):
        return 10 * np.log10(rmse)


def metrics(errors, thresholds_db=None):
    """RMSE and CCDF of per-trial error magnitudes.

    ``rmse = sqrt(mean(|e|^2) / 2)``.  The CCDF is ``P(e_db > t)`` where a
    trial's error in dB is ``10 log10(|e| / sqrt(2))``, evaluated at
    ``thresholds_db`` (default -40 to 0 dB in 0.5 dB steps).

    Returns:
        (rmse, (thresholds_db, prob))
    """
    e = np.asarray(errors, dtype=float)
    if not len(e):
        raise InvalidArgument("need at least one error")
    rmse = float(np.sqrt(np.mean(e ** 2) / 2))
    t = np.arange(-40.0, 0.01, 0.5) if thresholds_db is None else np.asarray(thresholds_db, float)
    edb = to_db(e / np.sqrt(2))
    prob = (edb[:, None] > t[None, :]).mean(axis=0)
    return rmse, (t, prob)


# --- Monte-Carlo -------------------------------------------------------------

@dataclass
class CampaignResult:
    snr_db: np.ndarray
    rmse: np.ndarray
    errors: np.ndarray  # (n_snr, trials) primary-target error magnitudes

    def to_csv(self, path, header=""):
        with open(path, "w", newline="") as fh:
            fh.write(header)
            w = csv.writer(fh)
            w.writerow(["snr_db", "rmse", "rmse_db"])
            for s, r in zip(self.snr_db, self.rmse):
                w.writerow([f"{s:.4f}", f"{r:.10e}", f"{to_db(r):.6f}"])

    def ccdf_csv(self, path, snr_index, header="", thresholds_db=None):
        _, (t, p) = metrics(self.errors[snr_index], thresholds_db)
        with open(path, "w", newline="") as fh:
            fh.write(header)
            w = csv.writer(fh)
            w.writerow(["threshold_db", "prob"])
            for a, b in zip(t, p):
                w.writerow([f"{a:.4f}", f"{b:.8f}"])


def run_trial(D, dictionary, snr_db, K, seed, rounds=3, Phi=None, measured=None,
              min_sep=0.16, interferer_level_db=0.0, estimator="nomp"):
    """One seeded trial; returns the primary-target error magnitude."""
    rng = np.random.default_rng(seed)
    truth = make_scenario(K, True, min_sep, interferer_level_db, rng)
    sigma2 = abs(truth.alpha[0]) ** 2 / 10 ** (snr_db / 10)
    snap = synthesize(truth, sigma2, D, rng)
    y = _apply(Phi, snap.x)
    if estimator == "mle":
        u_hat = mle_single(y, dictionary, Phi, measured=measured)[None]
    else:
        u_hat = nomp(y, dictionary, K, rounds, Phi, measured).u
    return match_errors(truth.u, u_hat)[0]


def run_campaign(D, snr_db, trials, K=1, seed=0, rounds=3, dictionary=None, Phi=None,
                 min_sep=0.16, interferer_level_db=0.0, estimator="nomp", threads=1):
    """RMSE of the primary target over an SNR sweep.

    Trial ``t`` at SNR index ``i`` uses ``default_rng([seed, i, t])``, so the
    results do not depend on ``threads``.
    """
    D = np.asarray(D, dtype=float)
    D = D - D.mean(axis=0)
    if dictionary is None:
        dictionary = make_steering_dictionary(D)
    Phi = _operator(Phi)
    measured = dictionary.measured(Phi)
    snr_db = np.atleast_1d(np.asarray(snr_db, dtype=float))
    errors = np.empty((len(snr_db), trials))

    def job(it):
        i, t = it
        return run_trial(D, dictionary, snr_db[i], K, [seed, i, t], rounds, Phi, measured,
                         min_sep, interferer_level_db, estimator)

    tasks = [(i, t) for i in range(len(snr_db)) for t in range(trials)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(job, tasks))
    else:
        out = [job(it) for it in tasks]
    errors[:] = np.array(out).reshape(len(snr_db), trials)
    rmse = np.sqrt(np.mean(errors ** 2, axis=1) / 2)
    return CampaignResult(snr_db, rmse, errors)
