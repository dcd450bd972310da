"""Subarray layouts, super-array configurations and design grids.

All coordinates are in wavelengths, so the wavenumber is ``2*pi``.

A super-array is a set of identical subarray modules.  Each module carries a
rectangular element lattice (the *element layout*) and occupies a slightly
larger rectangular *footprint* on the aperture.  The footprint is not
symmetric about the element lattice; modules can be mounted in an ``UP``
(0 deg) or ``DOWN`` (180 deg) pose, which flips the footprint about the
lattice center while leaving the element positions unchanged.
"""
import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConstraintViolation, InvalidArgument

WAVENUMBER = 2 * np.pi

# Rectangles that share an edge are allowed to touch.
OVERLAP_TOL = 1e-9


class Pose(enum.IntFlag):
    """Mounting pose of a module, or a set of poses still allowed for it.

    ``FREE`` is the union ``UP | DOWN`` and is used as a state while a
    configuration is being grown; concrete configurations use ``UP`` or
    ``DOWN`` only.
    """

    UP = 1
    DOWN = 2
    FREE = 3

    @classmethod
    def parse(cls, text):
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise InvalidArgument(f"unknown pose {text!r}") from None


def _pose_sign(poses):
    poses = np.asarray(poses)
    return np.where(poses == Pose.DOWN, -1.0, 1.0)


@dataclass(frozen=True)
class Footprint:
    """Rectangle occupied by one module, for the ``UP`` pose.

    Args:
        width, height: rectangle size in wavelengths.
        offset: center of the rectangle relative to the element-lattice
            center.  The ``DOWN`` pose uses ``-offset``.
    """

    width: float
    height: float
    offset: tuple = (0.0, 0.0)

    def rect(self, center, pose=Pose.UP):
        """Return ``(xmin, xmax, ymin, ymax)`` of the module placed at ``center``."""
        s = -1.0 if pose == Pose.DOWN else 1.0
        cx = center[0] + s * self.offset[0]
        cy = center[1] + s * self.offset[1]
        return (cx - self.width / 2, cx + self.width / 2,
                cy - self.height / 2, cy + self.height / 2)


@dataclass(frozen=True, eq=False)
class ElementLayout:
    """Element offsets of one subarray relative to its center."""

    rows: int
    cols: int
    dx: float
    dy: float
    offsets: np.ndarray
    footprint: Footprint

    @property
    def n_elements(self):
        return len(self.offsets)

    @property
    def covariance(self):
        return self.offsets.T @ self.offsets / self.n_elements


def build_subarray_layout(rows=4, cols=4, dx=0.5, dy=0.6, margin=0.0,
                          overhang=0.5, footprint=None):
    """Build a centered ``rows x cols`` rectangular subarray.

    The default footprint is the element-cell bounding box (``cols*dx`` by
    ``rows*dy``), grown by ``margin`` on every side and by ``overhang`` on the
    +x side (the side that flips with the pose).

    Args:
        rows, cols: lattice size.
        dx, dy: horizontal and vertical element spacing in wavelengths.
        margin: extra clearance around the element cells.
        overhang: extra module length on the pose-asymmetric side.
        footprint: explicit :class:`Footprint`; overrides the defaults above.

    Returns:
        ElementLayout
    """
    if rows < 1 or cols < 1:
        raise InvalidArgument("rows and cols must be >= 1")
    if dx <= 0 or dy <= 0:
        raise InvalidArgument("element spacing must be positive")
    if margin < 0 or overhang < 0:
        raise InvalidArgument("margin and overhang must be non-negative")
    x = (np.arange(cols) - (cols - 1) / 2) * dx
    y = (np.arange(rows) - (rows - 1) / 2) * dy
    xx, yy = np.meshgrid(x, y)
    offsets = np.column_stack([xx.ravel(), yy.ravel()])
    if footprint is None:
        footprint = Footprint(width=cols * dx + 2 * margin + overhang,
                              height=rows * dy + 2 * margin,
                              offset=(overhang / 2, 0.0))
    x0, x1, y0, y1 = footprint.rect((0.0, 0.0), Pose.UP)
    inside = ((offsets[:, 0] >= x0 - OVERLAP_TOL) & (offsets[:, 0] <= x1 + OVERLAP_TOL)
              & (offsets[:, 1] >= y0 - OVERLAP_TOL) & (offsets[:, 1] <= y1 + OVERLAP_TOL))
    if not inside.all():
        raise InvalidArgument("footprint does not contain all element offsets")
    offsets.setflags(write=False)
    return ElementLayout(rows, cols, dx, dy, offsets, footprint)


@dataclass(frozen=True, eq=False)
class SuperArrayConfig:
    """Subarray centers (the ``N_s x 2`` matrix C) and their poses."""

    centers: np.ndarray
    poses: tuple
    grid_id: str = None

    def __post_init__(self):
        centers = np.array(self.centers, dtype=float).reshape(-1, 2)
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        poses = self.poses
        if poses is None:
            poses = (Pose.UP,) * len(centers)
        poses = tuple(Pose(int(p)) for p in poses)
        if len(poses) != len(centers):
            raise InvalidArgument("need one pose per subarray")
        object.__setattr__(self, "poses", poses)

    @property
    def n_subarrays(self):
        return len(self.centers)

    def replace_center(self, i, center, grid_id=None):
        c = self.centers.copy()
        c[i] = center
        return SuperArrayConfig(c, self.poses, grid_id)

    def __eq__(self, other):
        if not isinstance(other, SuperArrayConfig):
            return NotImplemented
        return (self.poses == other.poses and self.centers.shape == other.centers.shape
                and np.array_equal(self.centers, other.centers))

    __hash__ = None

    def __repr__(self):
        rows = ", ".join(f"({x:g}, {y:g}, {p.name})"
                         for (x, y), p in zip(self.centers, self.poses))
        return f"SuperArrayConfig([{rows}])"


@dataclass(frozen=True, eq=False)
class DesignGrid:
    """Discrete candidate positions for subarray centers."""

    extent: tuple
    pitch: float
    points: np.ndarray = field(repr=False)

    @property
    def grid_id(self):
        return f"{self.extent[0]:g}x{self.extent[1]:g}@{self.pitch:g}"

    def index_of(self, point):
        hits = np.flatnonzero(np.all(np.abs(self.points - point) < 1e-9, axis=1))
        return int(hits[0]) if len(hits) else None


def make_design_grid(width=20.0, height=None, pitch=1.0):
    """Cell-centered grid of ``(width/pitch) x (height/pitch)`` points centered on the origin."""
    height = width if height is None else height
    if pitch <= 0:
        raise InvalidArgument("grid pitch must be positive")
    nx = int(round(width / pitch))
    ny = int(round(height / pitch))
    if nx < 1 or ny < 1:
        raise InvalidArgument("grid extent smaller than one pitch")
    x = -width / 2 + pitch / 2 + pitch * np.arange(nx)
    y = -height / 2 + pitch / 2 + pitch * np.arange(ny)
    yy, xx = np.meshgrid(y, x, indexing="ij")
    points = np.column_stack([xx.ravel(), yy.ravel()])
    points.setflags(write=False)
    return DesignGrid((float(width), float(height)), float(pitch), points)


# --- footprint overlap ------------------------------------------------------

def footprints_overlap(ca, pa, cb, pb, footprint):
    """Strict-interior overlap test of two modules; broadcasts over leading axes."""
    ca = np.asarray(ca, dtype=float)
    cb = np.asarray(cb, dtype=float)
    off = np.asarray(footprint.offset, dtype=float)
    s = (_pose_sign(pa) - _pose_sign(pb))[..., None]
    d = np.abs(ca - cb + s * off)
    return (d[..., 0] < footprint.width - OVERLAP_TOL) & (d[..., 1] < footprint.height - OVERLAP_TOL)


_CONCRETE = (Pose.UP, Pose.DOWN)


def _compatible_matrix(ca, cb, footprint):
    """``ok[..., i, j]``: module at ca in pose i and module at cb in pose j do not overlap."""
    ca = np.asarray(ca, dtype=float)[..., None, None, :]
    cb = np.asarray(cb, dtype=float)[..., None, None, :]
    pa = np.array([[1, 1], [2, 2]])
    pb = np.array([[1, 2], [1, 2]])
    return ~footprints_overlap(ca, pa, cb, pb, footprint)


def vacancy_states(centers, states, points, footprint):
    """Pose state (bitmask, 0 = blocked) for a new module at each candidate point.

    A pose of the new module is allowed when every dormant module keeps at
    least one of its allowed poses compatible with it.
    """
    points = np.asarray(points, dtype=float)
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    states = np.asarray(states, dtype=np.uint8).reshape(-1)
    fits = np.ones((len(points), 2), dtype=bool)
    if len(centers):
        ok = _compatible_matrix(points[:, None, :], centers[None, :, :], footprint)  # P,n,2,2
        allowed = np.stack([(states & 1) > 0, (states & 2) > 0], axis=-1)  # n,2
        fits = np.all(np.any(ok & allowed[None, :, None, :], axis=-1), axis=1)  # P,2
    return (fits[:, 0] * 1 + fits[:, 1] * 2).astype(np.uint8)


def update_dormant_states(centers, states, new_center, new_state, footprint):
    """Drop dormant poses that no allowed pose of the newly placed module tolerates."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    states = np.asarray(states, dtype=np.uint8).reshape(-1)
    if not len(centers):
        return states.copy()
    ok = _compatible_matrix(np.asarray(new_center, float)[None, :], centers, footprint)  # n,2(new),2(dormant)
    new_allowed = np.array([(new_state & 1) > 0, (new_state & 2) > 0])
    keep = np.any(ok & new_allowed[None, :, None], axis=1)  # n,2
    return (states & (keep[:, 0] * 1 + keep[:, 1] * 2)).astype(np.uint8)


def find_pose_assignment(centers, states, footprint):
    """Pick a concrete pose per module so that no two footprints overlap.

    Depth-first search over the modules whose state is still ``FREE``.

    Returns:
        Tuple of :class:`Pose`, or ``None`` when no assignment exists.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    n = len(centers)
    options = [[p for p in _CONCRETE if int(s) & int(p)] for s in states]
    if any(not o for o in options):
        return None
    ok = _compatible_matrix(centers[:, None, :], centers[None, :, :], footprint)
    chosen = [None] * n

    def assign(i):
        if i == n:
            return True
        for p in options[i]:
            pi = 0 if p == Pose.UP else 1
            if all(ok[i, j, pi, 0 if chosen[j] == Pose.UP else 1] for j in range(i)):
                chosen[i] = p
                if assign(i + 1):
                    return True
        chosen[i] = None
        return False

    return tuple(chosen) if assign(0) else None


def is_feasible(config, layout):
    """True when the modules of ``config`` can be mounted without overlap."""
    return find_pose_assignment(config.centers, [int(p) for p in config.poses],
                                layout.footprint) is not None


def resolve_poses(config, layout):
    """Return ``config`` with every ``FREE`` pose replaced by a concrete one."""
    poses = find_pose_assignment(config.centers, [int(p) for p in config.poses],
                                 layout.footprint)
    if poses is None:
        raise ConstraintViolation("module footprints overlap in every pose assignment")
    return SuperArrayConfig(config.centers, poses, config.grid_id)


def vacancy_search(occupied, grid, layout):
    """List grid points where one more module fits.

    Args:
        occupied: :class:`SuperArrayConfig` of the modules already placed, or
            ``None`` for an empty aperture.  ``FREE`` poses are honored.
        grid: :class:`DesignGrid`.
        layout: :class:`ElementLayout` providing the footprint.

    Returns:
        list of ``(point, Pose)``; the pose is ``FREE`` when both poses fit.
    """
    if occupied is None:
        centers, states = np.zeros((0, 2)), np.zeros(0, np.uint8)
    else:
        centers = occupied.centers
        states = np.array([int(p) for p in occupied.poses], dtype=np.uint8)
    st = vacancy_states(centers, states, grid.points, layout.footprint)
    return [(grid.points[i].copy(), Pose(int(st[i]))) for i in np.flatnonzero(st)]


def place_module(config, point, pose, layout):
    """Append a module and narrow the pose states of the dormant modules.

    ``config`` may be ``None`` (first module).  ``pose`` is the state of the
    new module, typically the one reported by :func:`vacancy_search`.
    """
    if config is None:
        return SuperArrayConfig(np.asarray(point, float)[None, :], (Pose(pose),))
    states = np.array([int(p) for p in config.poses], dtype=np.uint8)
    new_state = vacancy_states(config.centers, states, np.asarray(point, float)[None, :],
                               layout.footprint)[0] & int(pose)
    if not new_state:
        raise ConstraintViolation(f"no pose fits at {tuple(point)}")
    states = update_dormant_states(config.centers, states, point, new_state, layout.footprint)
    if not states.all():
        raise ConstraintViolation("placement leaves a dormant module without a pose")
    centers = np.vstack([config.centers, point])
    return SuperArrayConfig(centers, tuple(states) + (int(new_state),), config.grid_id)


# --- element positions and shape statistics --------------------------------

def expand_super_array(config, layout, check=True):
    """Element positions of the full array, subarray-major, re-centered to zero mean.

    Args:
        config: :class:`SuperArrayConfig`.
        layout: :class:`ElementLayout`.
        check: verify the no-overlap constraint first.  Reference layouts
            whose footprints are unknown can pass ``False``.

    Returns:
        ``(N_s * N_e, 2)`` array.
    """
    if check and not is_feasible(config, layout):
        raise ConstraintViolation("module footprints overlap")
    d = (config.centers[:, None, :] + layout.offsets[None, :, :]).reshape(-1, 2)
    return d - d.mean(axis=0)


def center_covariance(centers):
    c = np.asarray(centers, dtype=float)
    c = c - c.mean(axis=0)
    return c.T @ c / len(c)


@dataclass(frozen=True)
class ShapeSignature:
    lambda1: float
    lambda2: float
    psi: float

    def as_array(self):
        return np.array([self.lambda1, self.lambda2, self.psi])


def shape_signature(config):
    """Eigenvalues of the center covariance and the variance of center distances.

    Args:
        config: :class:`SuperArrayConfig` or an ``(N_s, 2)`` array of centers.

    Returns:
        ShapeSignature with ``lambda1 <= lambda2`` (wavelength^2) and ``psi``.
    """
    centers = config.centers if isinstance(config, SuperArrayConfig) else np.asarray(config, float)
    if len(centers) < 2:
        raise InvalidArgument("shape signature needs at least two subarrays")
    lam = np.clip(np.linalg.eigvalsh(center_covariance(centers)), 0.0, None)
    psi = float(np.var(pdist(centers)))
    return ShapeSignature(float(lam[0]), float(lam[1]), psi)


def eigen_perturbation_bound(radius, n, delta):
    """Bound on the eigenvalue change of a position covariance when one point moves.

    Moving the point at distance ``radius`` from the array center by
    ``delta`` (``delta <= 1`` wavelength) changes each eigenvalue of the
    covariance of ``n`` points by at most ``(2*radius + 1) * delta / n``.
    """
    if radius < 0 or delta < 0 or n < 1:
        raise InvalidArgument("radius, delta must be >= 0 and n >= 1")
    return (2.0 * radius + 1.0) * delta / n


def all_pairs(n):
    return list(itertools.combinations(range(n), 2))
