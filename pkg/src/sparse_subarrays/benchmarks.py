"""Reference configurations: the compact tiling and the naive diamond."""
import numpy as np
from scipy import optimize

from .beampattern import mainlobe_ellipse
from .errors import InvalidArgument
from .geometry import Pose, SuperArrayConfig, expand_super_array


def compact_array(layout, n_subarrays=8):
    """Modules tiled edge to edge in two columns so the elements form one uniform lattice.

    The left column is mounted ``DOWN`` and the right column ``UP``, which
    puts both footprint overhangs on the outside.
    """
    if n_subarrays % 2:
        raise InvalidArgument("compact tiling needs an even module count")
    per_col = n_subarrays // 2
    w = layout.cols * layout.dx
    h = layout.rows * layout.dy
    ys = (np.arange(per_col) - (per_col - 1) / 2) * h
    centers = [(-w / 2, y) for y in ys] + [(w / 2, y) for y in ys]
    poses = [Pose.DOWN] * per_col + [Pose.UP] * per_col
    return SuperArrayConfig(np.array(centers), poses)


def diamond_centers(radius, stretch=1.0):
    """Four vertices of a diamond plus the four edge midpoints; x scaled by ``stretch``."""
    v = np.array([[radius * stretch, 0.0], [0.0, radius], [-radius * stretch, 0.0], [0.0, -radius]])
    mid = 0.5 * (v + np.roll(v, -1, axis=0))
    return np.vstack([v, mid])


def _balanced_stretch(radius, layout):
    # equal total spread along x and y (zero eccentricity): the center spread
    # along x has to make up for the narrower element spacing in x.
    var_e = layout.covariance
    extra = var_e[1, 1] - var_e[0, 0]
    var_y = 3 * radius ** 2 / 8
    return np.sqrt(max(var_y + extra, 1e-12) * 8 / 3) / radius


def naive_array(layout, target_bw=7.9, stretch=None):
    """Diamond of eight modules whose DoA beamwidth equals ``target_bw`` degrees.

    The radius is found by bisection on the beamwidth.  By default the
    diamond is stretched along x just enough to give zero eccentricity.
    Module footprints are not checked; the diamond is a geometric reference,
    not a buildable layout.
    """
    def shape(r):
        s = _balanced_stretch(r, layout) if stretch is None else stretch
        return diamond_centers(r, s)

    def excess(r):
        D = expand_super_array(SuperArrayConfig(shape(r), None), layout, check=False)
        return mainlobe_ellipse(D).bw_doa - target_bw

    r = optimize.brentq(excess, 0.5, 50.0, xtol=1e-12)
    return SuperArrayConfig(shape(r), None)
