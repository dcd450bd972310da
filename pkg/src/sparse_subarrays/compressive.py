"""Block-diagonal compressive measurements and compressive NOMP.

Each subarray combines its ``N_e`` element signals into ``M_i`` outputs
with random QPSK weights ``(1/sqrt(M_i)) * {+-1, +-j}``; the full
measurement matrix is block diagonal with one block per subarray (element
order is subarray-major, as produced by ``expand_super_array``).
"""
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .errors import InvalidArgument
from .estimation import nomp

_QPSK = np.array([1, 1j, -1, -1j])


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    blocks: tuple
    seed: object
    m_list: tuple

    @property
    def Phi(self):
        return block_diag(*self.blocks)

    @property
    def is_identity(self):
        return all(b.shape[0] == b.shape[1] and np.array_equal(b, np.eye(len(b)))
                   for b in self.blocks)

    @property
    def operator(self):
        """Matrix to apply to snapshots; ``None`` for identity sensing.

        Returning ``None`` sends the identity case down the full-measurement
        code path, so it reproduces that path bit for bit.
        """
        return None if self.is_identity else self.Phi

    @property
    def shape(self):
        return sum(b.shape[0] for b in self.blocks), sum(b.shape[1] for b in self.blocks)

    def to_json(self):
        return json.dumps({"seed": self.seed, "m_list": list(self.m_list),
                           "n_elem": self.blocks[0].shape[1],
                           "identity": self.is_identity})

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return draw_measurement(len(d["m_list"]), d["n_elem"], d["m_list"], d["seed"],
                                identity=d.get("identity", False))

    def dump(self, path):
        np.savetxt(path, self.Phi.view(float), fmt="%.10g",
                   header="real,imag interleaved; " + self.to_json())


def draw_measurement(n_sub, n_elem, m_list, seed=None, identity=False):
    """Draw one QPSK block per subarray.

    Args:
        n_sub: number of subarrays.
        n_elem: elements per subarray.
        m_list: measurements per subarray (scalar or one per subarray).
        seed: RNG seed; block ``i`` uses its own spawned stream.
        identity: debug mode; every block is the ``n_elem`` identity.

    Returns:
        MeasurementMatrix with unit-norm columns.
    """
    m_list = tuple(int(m) for m in np.broadcast_to(m_list, (n_sub,)))
    if any(m < 1 or m > n_elem for m in m_list):
        raise InvalidArgument("each M_i must satisfy 1 <= M_i <= N_e")
    if identity:
        if any(m != n_elem for m in m_list):
            raise InvalidArgument("identity blocks need M_i = N_e")
        return MeasurementMatrix(tuple(np.eye(n_elem, dtype=complex) for _ in m_list),
                                 seed, m_list)
    streams = np.random.SeedSequence(seed).spawn(n_sub)
    blocks = []
    for m, ss in zip(m_list, streams):
        rng = np.random.default_rng(ss)
        b = _QPSK[rng.integers(0, 4, size=(m, n_elem))] / np.sqrt(m)
        # already unit norm for this alphabet; kept as the explicit final pass
        b = b / np.linalg.norm(b, axis=0, keepdims=True)
        blocks.append(b)
    return MeasurementMatrix(tuple(blocks), seed, m_list)


def isometry_ratio(Phi, dictionary, sparsity, trials, seed=None, batch=4096):
    """Extremes of ``10 log10(||Phi S b||^2 / ||S b||^2)`` over random sparse ``b``.

    Supports are uniform without replacement over the dictionary columns;
    nonzero values are unit-variance complex Gaussian.

    Returns:
        (min_db, max_db)
    """
    Phi = Phi.Phi if isinstance(Phi, MeasurementMatrix) else np.asarray(Phi)
    S = dictionary.S
    M = S.shape[1]
    if sparsity > M:
        raise InvalidArgument("sparsity exceeds dictionary size")
    rng = np.random.default_rng(seed)
    PS = Phi @ S
    lo, hi = np.inf, -np.inf
    done = 0
    while done < trials:
        nb = min(batch, trials - done)
        supp = np.argsort(rng.random((nb, M)), axis=1)[:, :sparsity] if M <= 64 else \
            _sample_supports(rng, nb, M, sparsity)
        vals = (rng.standard_normal((nb, sparsity)) + 1j * rng.standard_normal((nb, sparsity))) / np.sqrt(2)
        full = np.einsum("nbk,bk->bn", S[:, supp], vals)
        comp = np.einsum("mbk,bk->bm", PS[:, supp], vals)
        ratio = 10 * np.log10(np.sum(np.abs(comp) ** 2, axis=1) / np.sum(np.abs(full) ** 2, axis=1))
        lo, hi = min(lo, ratio.min()), max(hi, ratio.max())
        done += nb
    return float(lo), float(hi)


def _sample_supports(rng, nb, M, k):
    """``nb`` uniformly random ``k``-subsets of ``range(M)`` (rejection on duplicates)."""
    out = rng.integers(0, M, size=(nb, k))
    while True:
        s = np.sort(out, axis=1)
        bad = np.any(s[:, 1:] == s[:, :-1], axis=1)
        if not bad.any():
            return out
        out[bad] = rng.integers(0, M, size=(int(bad.sum()), k))


def compressive_nomp(y, Phi, dictionary, K, rounds=3, measured=None):
    """NOMP on compressive measurements ``y = Phi x``."""
    return nomp(y, dictionary, K, rounds, Phi, measured)
