"""Two-stage placement optimization.

Stage one grows a dictionary of feasible configurations one module at a time
(a breadth-first prefix tree).  After every layer the children are binned by
their shape signature ``(lambda1, lambda2, psi)`` and one random child per
bin survives.  Every surviving configuration is scored, the objectives are
normalized over the dictionary and the weighted cost picks the optimum.

Stage two refines the optimum off-grid: each module in turn tries a small
lattice of positions around its grid point and moves when the cost drops.
"""
import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .beampattern import BeamAttributes, batch_ellipse, batch_msll, ebp_rho, element_pattern
from .errors import ConstraintViolation, InfeasibleInstance, InvalidArgument
from .geometry import (OVERLAP_TOL, Pose, SuperArrayConfig, find_pose_assignment,
                       footprints_overlap, is_feasible)

log = logging.getLogger(__name__)

OBJECTIVES = ("bw", "msll", "ecc")


@dataclass(frozen=True)
class ObjectiveWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidArgument("objective weights must be finite and non-negative")
        if not np.any(w > 0):
            raise InvalidArgument("at least one objective weight must be positive")

    def as_array(self):
        return np.array([self.alpha, self.beta, self.gamma], dtype=float)


@dataclass(frozen=True)
class ObjectiveRanges:
    """Per-objective ``(min, max)`` over a dictionary."""

    bw: tuple
    msll: tuple
    ecc: tuple

    @classmethod
    def from_values(cls, bw, msll, ecc):
        def span(x):
            x = np.asarray(x, float)
            x = x[np.isfinite(x)]
            return (float(x.min()), float(x.max())) if len(x) else (0.0, 0.0)
        return cls(span(bw), span(msll), span(ecc))

    def as_dict(self):
        return {"bw": list(self.bw), "msll": list(self.msll), "ecc": list(self.ecc)}


def normalize_objective(raw, bounds):
    """Map ``raw`` linearly so that ``bounds[0] -> 0`` and ``bounds[1] -> 1``, clamped."""
    lo, hi = bounds
    if not hi > lo:
        raise InvalidArgument(f"degenerate objective range {bounds}")
    return np.clip((np.asarray(raw, dtype=float) - lo) / (hi - lo), 0.0, 1.0)


def weighted_cost(attrs, weights, ranges):
    """``alpha*BW + beta*MSLL + gamma*ecc`` on normalized objectives.

    ``BW`` is the DoA beamwidth.  Objectives with zero weight are skipped,
    and so are objectives that are constant over the dictionary (they cannot
    change the ranking).  Directivity is not part of the cost.

    Args:
        attrs: :class:`BeamAttributes`, or a tuple ``(bw, msll, ecc)`` of
            scalars or equal-length arrays.
        weights: :class:`ObjectiveWeights`.
        ranges: :class:`ObjectiveRanges`.
    """
    if isinstance(attrs, BeamAttributes):
        raw = (attrs.bw_doa, attrs.msll, attrs.ecc)
    else:
        raw = attrs
    total = 0.0
    for w, x, b in zip(weights.as_array(), raw, (ranges.bw, ranges.msll, ranges.ecc)):
        if w == 0 or not b[1] > b[0]:
            continue
        x = np.asarray(x, dtype=float)
        # a missing sidelobe is the best possible level
        x = np.where(np.isneginf(x), b[0], x)
        total = total + w * normalize_objective(x, b)
    return total + np.zeros(np.shape(raw[0]))


@dataclass(eq=False)
class Dictionary:
    """Scored set of feasible configurations sharing one layout and grid.

    Attributes:
        centers: ``(M, N_s, 2)`` module centers.
        poses: ``(M, N_s)`` concrete poses (``Pose`` values).
        bw, msll, ecc, bw_max, bw_min: ``(M,)`` attributes (MSLL at ``n_pattern``).
        tau: bin widths used by the pruning step.
    """

    centers: np.ndarray
    poses: np.ndarray
    tau: tuple
    seed: int
    grid_id: str = None
    n_pattern: int = 256
    theta_max: float = 30.0
    eps: int = 2
    bw: np.ndarray = None
    msll: np.ndarray = None
    ecc: np.ndarray = None
    bw_max: np.ndarray = None
    bw_min: np.ndarray = None
    layer_sizes: list = field(default_factory=list)

    def __len__(self):
        return len(self.centers)

    @property
    def ranges(self):
        return ObjectiveRanges.from_values(self.bw, self.msll, self.ecc)

    def config(self, i):
        return SuperArrayConfig(self.centers[i], tuple(int(p) for p in self.poses[i]), self.grid_id)

    @property
    def configs(self):
        return [self.config(i) for i in range(len(self))]

    def attributes(self, i):
        return BeamAttributes(float(self.bw_max[i]), float(self.bw_min[i]), float(self.bw[i]),
                              float(self.msll[i]), float("nan"), float(self.ecc[i]))

    def score(self, layout, batch=64):
        self.bw, self.ecc, self.bw_max, self.bw_min = batch_ellipse(self.centers, layout)
        self.msll = score_msll(self.centers, layout, self.n_pattern, self.theta_max, self.eps, batch)
        return self

    def save(self, path, header=""):
        meta = {"grid_id": self.grid_id, "tau": list(self.tau), "seed": self.seed,
                "n_pattern": self.n_pattern, "theta_max": self.theta_max, "eps": self.eps,
                "layer_sizes": list(self.layer_sizes)}
        if self.bw is not None:
            meta["ranges"] = self.ranges.as_dict()
        with open(path, "w") as fh:
            fh.write(header)
            fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
            for i in range(len(self)):
                mods = " ".join(f"{x:.6f} {y:.6f} {Pose(int(p)).name}"
                                for (x, y), p in zip(self.centers[i], self.poses[i]))
                attrs = ""
                if self.bw is not None:
                    attrs = f" | {self.bw[i]:.6f} {self.msll[i]:.6f} {self.ecc[i]:.6f}"
                fh.write(mods + attrs + "\n")

    @classmethod
    def load(cls, path, layout=None):
        meta, rows = None, []
        with open(path) as fh:
            for line in fh:
                if line.startswith("# {"):
                    meta = json.loads(line[2:])
                elif line.strip() and not line.startswith("#"):
                    rows.append(line.split("|")[0].split())
        if meta is None:
            raise InvalidArgument(f"{path}: missing dictionary header")
        centers = np.array([[[float(r[j]), float(r[j + 1])] for j in range(0, len(r), 3)]
                            for r in rows])
        poses = np.array([[int(Pose.parse(r[j + 2])) for j in range(0, len(r), 3)]
                          for r in rows], dtype=np.uint8)
        d = cls(centers, poses, tuple(meta["tau"]), meta["seed"], meta["grid_id"],
                meta["n_pattern"], meta["theta_max"], meta["eps"],
                layer_sizes=meta.get("layer_sizes", []))
        return d.score(layout) if layout is not None else d


def score_msll(centers, layout, n=256, theta_max=30.0, eps=2, batch=64):
    rho = ebp_rho(theta_max)
    element = element_pattern(layout, n, rho)
    out = np.empty(len(centers))
    for s in range(0, len(centers), batch):
        out[s:s + batch] = batch_msll(centers[s:s + batch], layout, n, rho, eps, element)
    return out


def default_tau(grid, n_subarrays):
    """Bin widths from the single-cell eigenvalue perturbation bound.

    ``(2 R_max + 1) * sqrt(2) * pitch / N_s`` with ``R_max`` the aperture
    half-diagonal, used for all three signature coordinates.
    """
    r_max = 0.5 * np.hypot(*grid.extent)
    t = (2 * r_max + 1) * np.sqrt(2) * grid.pitch / n_subarrays
    return (t, t, t)


# --- dictionary search -------------------------------------------------------

def _pair_ok(d, footprint):
    """``ok[..., i, j]`` for new pose i and existing pose j given ``d = new - old``."""
    off = np.asarray(footprint.offset, dtype=float)
    w, h = footprint.width - OVERLAP_TOL, footprint.height - OVERLAP_TOL
    out = np.empty(d.shape[:-1] + (2, 2), dtype=bool)
    for i, si in enumerate((1.0, -1.0)):
        for j, sj in enumerate((1.0, -1.0)):
            dd = d + (si - sj) * off
            out[..., i, j] = ~((np.abs(dd[..., 0]) < w) & (np.abs(dd[..., 1]) < h))
    return out


def _expand_chunk(centers, states, points, footprint):
    """Vacancy states of every grid point for a chunk of parents.

    Returns:
        new_state ``(P, G)`` and child dormant states ``(P, G, L)``.
    """
    d = points[None, :, None, :] - centers[:, None, :, :]  # P,G,L,2
    ok = _pair_ok(d, footprint)  # P,G,L,2(new),2(old)
    allowed = np.stack([(states & 1) > 0, (states & 2) > 0], axis=-1)[:, None, :, None, :]
    fits = np.all(np.any(ok & allowed, axis=-1), axis=2)  # P,G,2
    new_state = (fits[..., 0] * 1 + fits[..., 1] * 2).astype(np.uint8)
    keep = np.any(ok & fits[:, :, None, :, None], axis=3)  # P,G,L,2(old)
    child_states = states[:, None, :] & (keep[..., 0] * 1 + keep[..., 1] * 2).astype(np.uint8)
    return new_state, child_states


def _signatures(centers, points):
    """Shape signatures of every (parent, appended point) pair.

    Returns:
        ``(P, G, 3)`` array of ``(lambda1, lambda2, psi)``.
    """
    P, L, _ = centers.shape
    n = L + 1
    s1 = centers.sum(axis=1)[:, None, :] + points[None, :, :]  # P,G,2
    sxx = (centers[..., 0] ** 2).sum(1)[:, None] + points[None, :, 0] ** 2
    syy = (centers[..., 1] ** 2).sum(1)[:, None] + points[None, :, 1] ** 2
    sxy = (centers[..., 0] * centers[..., 1]).sum(1)[:, None] + points[None, :, 0] * points[None, :, 1]
    mx, my = s1[..., 0] / n, s1[..., 1] / n
    a = sxx / n - mx * mx
    c = syy / n - my * my
    b = sxy / n - mx * my
    half = 0.5 * (a + c)
    rad = np.sqrt(0.25 * (a - c) ** 2 + b * b)
    lam1 = np.maximum(half - rad, 0.0)
    lam2 = half + rad
    # pairwise distances: parent pairs plus the new point to every parent module
    iu, ju = np.triu_indices(L, 1)
    pd = np.linalg.norm(centers[:, iu] - centers[:, ju], axis=-1)  # P, L(L-1)/2
    nd = np.linalg.norm(points[None, :, None, :] - centers[:, None, :, :], axis=-1)  # P,G,L
    m = n * (n - 1) / 2
    sd = pd.sum(1)[:, None] + nd.sum(-1)
    sd2 = (pd ** 2).sum(1)[:, None] + (nd ** 2).sum(-1)
    psi = np.maximum(sd2 / m - (sd / m) ** 2, 0.0)
    return np.stack([lam1, lam2, psi], axis=-1)


def _bin_index(sig, tau):
    return np.floor(np.round(sig, 10) / np.asarray(tau)).astype(np.int64)


def _pick_per_bin(bins, keys):
    """Index of the smallest key within each distinct bin row."""
    order = np.lexsort((keys, bins[:, 2], bins[:, 1], bins[:, 0]))
    b = bins[order]
    first = np.ones(len(b), dtype=bool)
    first[1:] = np.any(b[1:] != b[:-1], axis=1)
    return order[first]


def build_dictionary(grid, layout, n_subarrays, n_init=16, tau=None, seed=0, roots=None,
                     n_pattern=256, theta_max=30.0, eps=2, chunk=128, score=True):
    """Prefix-tree dictionary search with shape-signature pruning.

    Args:
        grid: :class:`DesignGrid` of candidate centers.
        layout: :class:`ElementLayout` shared by all modules.
        n_subarrays: modules per configuration (>= 2).
        n_init: number of random root placements (capped at the grid size).
        tau: bin widths for ``(lambda1, lambda2, psi)``; defaults to
            :func:`default_tau`.
        seed: master seed; layer ``l`` draws from ``SeedSequence([seed, l])``.
        roots: explicit root points, overriding the random draw.
        n_pattern: UV grid size used to score MSLL.
        chunk: parents expanded per vectorized block.
        score: compute attributes after the search.

    Returns:
        Dictionary

    Raises:
        InfeasibleInstance: some layer has no feasible child.
    """
    if n_subarrays < 2:
        raise InvalidArgument("need at least two subarrays")
    if n_init < 1:
        raise InvalidArgument("n_init must be >= 1")
    tau = default_tau(grid, n_subarrays) if tau is None else tuple(float(t) for t in np.broadcast_to(tau, 3))
    if min(tau) <= 0:
        raise InvalidArgument("tau must be positive")
    points = np.asarray(grid.points, dtype=float)
    G = len(points)
    fp = layout.footprint

    if roots is None:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
        idx = np.sort(rng.choice(G, size=min(n_init, G), replace=False))
        root_pts = points[idx]
    else:
        root_pts = np.asarray(roots, dtype=float).reshape(-1, 2)
    centers = root_pts[:, None, :].copy()
    states = np.full((len(root_pts), 1), int(Pose.FREE), dtype=np.uint8)
    sizes = [len(centers)]

    for layer in range(2, n_subarrays + 1):
        rng = np.random.default_rng(np.random.SeedSequence([seed, layer]))
        cand_bins, cand_keys, cand_parent, cand_point, cand_state = [], [], [], [], []
        for s in range(0, len(centers), chunk):
            c, st = centers[s:s + chunk], states[s:s + chunk]
            new_state, _ = _expand_chunk(c, st, points, fp)
            sig = _signatures(c, points)
            keys = rng.random(new_state.shape)
            p_idx, g_idx = np.nonzero(new_state)
            if not len(p_idx):
                continue
            bins = _bin_index(sig[p_idx, g_idx], tau)
            win = _pick_per_bin(bins, keys[p_idx, g_idx])
            cand_bins.append(bins[win])
            cand_keys.append(keys[p_idx, g_idx][win])
            cand_parent.append(p_idx[win] + s)
            cand_point.append(g_idx[win])
            cand_state.append(new_state[p_idx[win], g_idx[win]])
        if not cand_bins:
            raise InfeasibleInstance(f"no room for module {layer} on grid {grid.grid_id}")
        bins = np.concatenate(cand_bins)
        win = _pick_per_bin(bins, np.concatenate(cand_keys))
        parent = np.concatenate(cand_parent)[win]
        point = np.concatenate(cand_point)[win]
        new_state = np.concatenate(cand_state)[win]
        order = np.lexsort((point, parent))
        parent, point, new_state = parent[order], point[order], new_state[order]
        # recompute the dormant-state update for the survivors only
        child_states = np.empty((len(parent), layer - 1), dtype=np.uint8)
        for s in range(0, len(parent), 4096):
            par = parent[s:s + 4096]
            d = points[point[s:s + 4096]][:, None, :] - centers[par]
            ok = _pair_ok(d, fp)
            ns = new_state[s:s + 4096]
            fits = np.stack([(ns & 1) > 0, (ns & 2) > 0], axis=-1)[:, None, :, None]
            keep = np.any(ok & fits, axis=2)
            child_states[s:s + 4096] = states[par] & (keep[..., 0] * 1 + keep[..., 1] * 2).astype(np.uint8)
        centers = np.concatenate([centers[parent], points[point][:, None, :]], axis=1)
        states = np.concatenate([child_states, new_state[:, None]], axis=1)
        sizes.append(len(centers))
        log.info("layer %d: %d configurations", layer, len(centers))

    poses, keep = [], []
    for i in range(len(centers)):
        p = find_pose_assignment(centers[i], states[i], fp)
        if p is not None:
            keep.append(i)
            poses.append([int(q) for q in p])
    if not keep:
        raise InfeasibleInstance("no configuration admits a consistent pose assignment")
    d = Dictionary(centers[keep], np.array(poses, dtype=np.uint8), tau, seed, grid.grid_id,
                   n_pattern, theta_max, eps, layer_sizes=sizes)
    return d.score(layout) if score else d


# --- selection ---------------------------------------------------------------

def _rank(cost, msll, ecc, centers):
    flat = centers.reshape(len(centers), -1)
    keys = [flat[:, j] for j in range(flat.shape[1] - 1, -1, -1)]
    return np.lexsort(keys + [ecc, msll, np.round(cost, 12)])


def select_optimum(dictionary, weights, layout=None, rescore_top=32, n_final=512):
    """Configuration with the lowest weighted cost.

    Ties go to lower MSLL, then lower eccentricity, then lexicographically
    smaller centers.  With ``layout`` given, the best ``rescore_top``
    candidates are re-scored at ``n_final`` (ranges stay frozen) before the
    final pick.

    Returns:
        (SuperArrayConfig, index into the dictionary)
    """
    if not len(dictionary):
        raise InvalidArgument("empty dictionary")
    ranges = dictionary.ranges
    msll = np.asarray(dictionary.msll, float)
    cost = weighted_cost((dictionary.bw, msll, dictionary.ecc), weights, ranges)
    order = _rank(cost, msll, dictionary.ecc, dictionary.centers)
    if layout is not None and rescore_top and n_final != dictionary.n_pattern:
        top = order[:rescore_top]
        fine = score_msll(dictionary.centers[top], layout, n_final,
                          dictionary.theta_max, dictionary.eps)
        c2 = weighted_cost((dictionary.bw[top], fine, dictionary.ecc[top]), weights, ranges)
        best = top[_rank(c2, fine, dictionary.ecc[top], dictionary.centers[top])[0]]
    else:
        best = order[0]
    return dictionary.config(best), int(best)


# --- local refinement --------------------------------------------------------

@dataclass
class RefineResult:
    config: SuperArrayConfig
    cost: float
    trace: list

    def write_trace(self, path, header=""):
        with open(path, "w", newline="") as fh:
            fh.write(header)
            w = csv.DictWriter(fh, fieldnames=["round", "subarray", "cost", "bw", "msll", "ecc"])
            w.writeheader()
            for row in self.trace:
                w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})


def refinement_offsets(pitch, sub=5):
    """``sub x sub`` lattice spanning one grid cell (``+-pitch/2``) around the anchor."""
    t = (np.arange(sub) - (sub - 1) / 2) * pitch / (sub - 1)
    xx, yy = np.meshgrid(t, t)
    return np.column_stack([xx.ravel(), yy.ravel()])


def _score(centers, layout, n, theta_max, eps, element):
    bw, ecc, _, _ = batch_ellipse(centers, layout)
    msll = batch_msll(centers, layout, n, ebp_rho(theta_max), eps, element)
    return bw, msll, ecc


def local_refine(config, layout, weights, ranges, pitch=1.0, offsets=None, rounds=3,
                 anchors=None, n=512, theta_max=30.0, eps=2):
    """Cyclic per-module refinement on a sub-grid lattice.

    For each round and each module, every anchor + offset position is scored
    with the other modules fixed; the best one is taken if it keeps the
    footprints disjoint (poses unchanged) and strictly lowers the cost.

    Args:
        config: starting configuration with concrete poses.
        ranges: frozen :class:`ObjectiveRanges` from the dictionary.
        pitch: design-grid pitch; the default lattice spans one cell.
        offsets: explicit ``(B, 2)`` candidate offsets.
        rounds: number of passes over all modules.
        anchors: lattice centers (default: the starting centers).

    Returns:
        RefineResult with the per-move cost trace (row 0 is the start).
    """
    if any(p == Pose.FREE for p in config.poses):
        raise InvalidArgument("refinement needs concrete poses")
    if not is_feasible(config, layout):
        raise ConstraintViolation("starting configuration is infeasible")
    offsets = refinement_offsets(pitch) if offsets is None else np.asarray(offsets, float)
    anchors = config.centers.copy() if anchors is None else np.asarray(anchors, float)
    poses = np.array([int(p) for p in config.poses])
    element = element_pattern(layout, n, ebp_rho(theta_max))
    cur = config.centers.copy()
    bw, msll, ecc = _score(cur[None], layout, n, theta_max, eps, element)
    cost = float(weighted_cost((bw, msll, ecc), weights, ranges)[0])
    trace = [dict(round=0, subarray=-1, cost=cost, bw=float(bw[0]), msll=float(msll[0]),
                  ecc=float(ecc[0]))]
    Ns = len(cur)
    for r in range(1, rounds + 1):
        for i in range(Ns):
            cand = anchors[i] + offsets
            others = np.delete(np.arange(Ns), i)
            clash = footprints_overlap(cand[:, None, :], poses[i], cur[others][None],
                                       poses[others][None], layout.footprint).any(axis=1)
            cand = cand[~clash]
            if not len(cand):
                continue
            trial = np.repeat(cur[None], len(cand), axis=0)
            trial[:, i] = cand
            tb, tm, te = _score(trial, layout, n, theta_max, eps, element)
            tc = weighted_cost((tb, tm, te), weights, ranges)
            j = _rank(tc, np.where(np.isneginf(tm), -1e9, tm), te, trial)[0]
            if tc[j] < cost - 1e-12:
                cur = trial[j]
                cost = float(tc[j])
                trace.append(dict(round=r, subarray=i, cost=cost, bw=float(tb[j]),
                                  msll=float(tm[j]), ecc=float(te[j])))
    out = SuperArrayConfig(cur, config.poses, None)
    return RefineResult(out, cost, trace)


@dataclass
class DesignResult:
    config: SuperArrayConfig
    selected: SuperArrayConfig
    dictionary: Dictionary
    refinement: RefineResult


def design_array(grid, layout, n_subarrays, weights, n_init=16, tau=None, seed=0,
                 n_pattern=256, n_final=512, rounds=3, theta_max=30.0, eps=2, dictionary=None):
    """Dictionary search, weighted selection and local refinement in one call."""
    if dictionary is None:
        dictionary = build_dictionary(grid, layout, n_subarrays, n_init, tau, seed,
                                      n_pattern=n_pattern, theta_max=theta_max, eps=eps)
    selected, _ = select_optimum(dictionary, weights, layout, n_final=n_final)
    ref = local_refine(selected, layout, weights, dictionary.ranges, pitch=grid.pitch,
                       rounds=rounds, n=n_final, theta_max=theta_max, eps=eps)
    return DesignResult(ref.config, selected, dictionary, ref)
