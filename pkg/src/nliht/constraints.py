"""Projections onto non-convex constraint sets.

Every set here is a finite union of linear subspaces of ``R^n``:

* :class:`KSparse` -- vectors with at most ``k`` non-zero entries,
* :class:`BlockSparse` -- vectors supported on at most ``k_blocks`` blocks of a
  fixed partition of the index set,
* :class:`UnionOfSubspaces` -- an explicit list of subspaces given by
  orthonormal bases.

All three admit exact nearest-point projections, so the projection slack is
zero for the built-in sets. When several nearest points exist the lowest index
wins (entry, block or subspace), which keeps solver traces reproducible.
"""
from dataclasses import dataclass, field

import numpy as np

from ._util import as_signal
from .errors import InvalidInput

__all__ = [
    "ProjectionSlack",
    "KSparse",
    "BlockSparse",
    "UnionOfSubspaces",
    "project",
    "project_union",
    "distance_to_set",
    "hard_threshold",
]


@dataclass(frozen=True)
class ProjectionSlack:
    """Squared-distance slack allowed for approximate projections."""

    epsilon: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise InvalidInput(f"projection slack must be finite and >= 0, got {self.epsilon}")


def hard_threshold(x, k):
    """Keep the ``k`` entries of largest magnitude and zero the rest.

    Ties in magnitude are resolved in favour of the lower index.

    Returns
    -------
    x_k : numpy.ndarray
    support : tuple of int
        Kept indices in increasing order.
    """
    order = np.argsort(-np.abs(x), kind="stable")
    keep = np.sort(order[:k])
    out = np.zeros_like(x)
    out[keep] = x[keep]
    return out, tuple(int(i) for i in keep)


class _ConstraintSet:
    n: int

    def _check(self, x):
        return as_signal(x, "x", self.n)

    def project(self, x):
        return self.project_with_id(x)[0]

    def project_with_id(self, x):
        raise NotImplementedError

    def basis(self, component):
        """Orthonormal basis (n x d) of one component subspace."""
        raise NotImplementedError

    def random_component(self, rng):
        raise NotImplementedError

    def sample(self, rng, count=None):
        """Draw members of the set.

        A component subspace is chosen uniformly at random and the member gets
        standard Gaussian coordinates in that component's basis. Draws are
        sequential, so ``sample(rng, T)`` shares its first rows with
        ``sample(rng, T')`` for ``T' > T`` given equally seeded generators.
        """
        if count is None:
            return self._sample_one(rng)
        out = np.empty((count, self.n))
        for i in range(count):
            out[i] = self._sample_one(rng)
        return out

    def _sample_one(self, rng):
        b = self.basis(self.random_component(rng))
        return b @ rng.standard_normal(b.shape[1])

    def contains(self, x, atol=1e-12):
        return distance_to_set(x, self) <= atol


@dataclass(frozen=True)
class KSparse(_ConstraintSet):
    """At most ``k`` non-zeros in ``R^n``."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or not 1 <= self.k <= self.n:
            raise InvalidInput(f"KSparse requires 1 <= k <= n, got n={self.n}, k={self.k}")

    def project_with_id(self, x):
        return hard_threshold(self._check(x), self.k)

    def basis(self, component):
        return np.eye(self.n)[:, list(component)]

    def random_component(self, rng):
        return tuple(int(i) for i in np.sort(rng.permutation(self.n)[: self.k]))

    def _sample_one(self, rng):
        x = np.zeros(self.n)
        supp = rng.permutation(self.n)[: self.k]
        x[supp] = rng.standard_normal(self.k)
        return x


@dataclass(frozen=True)
class BlockSparse(_ConstraintSet):
    """Supported on at most ``k_blocks`` blocks of a partition of ``range(n)``."""

    blocks: tuple
    k_blocks: int
    n: int = field(init=False)

    def __post_init__(self):
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise InvalidInput("BlockSparse needs at least one non-empty block")
        flat = sorted(i for b in blocks for i in b)
        if flat != list(range(len(flat))):
            raise InvalidInput("blocks must partition {0, ..., n-1} exactly")
        if not 1 <= self.k_blocks <= len(blocks):
            raise InvalidInput(
                f"k_blocks must lie in [1, {len(blocks)}], got {self.k_blocks}"
            )
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "n", len(flat))

    @classmethod
    def contiguous(cls, n, block_size, k_blocks):
        if n % block_size:
            raise InvalidInput(f"block size {block_size} does not divide n={n}")
        return cls(tuple(range(s, s + block_size) for s in range(0, n, block_size)), k_blocks)

    def project_with_id(self, x):
        x = self._check(x)
        energy = np.array([np.linalg.norm(x[list(b)]) for b in self.blocks])
        chosen = np.sort(np.argsort(-energy, kind="stable")[: self.k_blocks])
        out = np.zeros_like(x)
        for j in chosen:
            idx = list(self.blocks[j])
            out[idx] = x[idx]
        return out, tuple(int(j) for j in chosen)

    def basis(self, component):
        idx = [i for j in component for i in self.blocks[j]]
        return np.eye(self.n)[:, idx]

    def random_component(self, rng):
        picked = rng.permutation(len(self.blocks))[: self.k_blocks]
        return tuple(int(j) for j in np.sort(picked))


@dataclass(frozen=True, eq=False)
class UnionOfSubspaces(_ConstraintSet):
    """Union of the column spans of orthonormal bases."""

    bases: tuple
    n: int = field(init=False)

    def __post_init__(self):
        if len(self.bases) == 0:
            raise InvalidInput("union of subspaces needs at least one basis")
        bases = []
        for i, b in enumerate(self.bases):
            b = np.array(b, dtype=float)
            if b.ndim == 1:
                b = b[:, None]
            if b.ndim != 2 or b.shape[1] == 0 or not np.all(np.isfinite(b)):
                raise InvalidInput(f"basis {i} must be a finite n x d matrix with d >= 1")
            if np.max(np.abs(b.T @ b - np.eye(b.shape[1]))) > 1e-10:
                raise InvalidInput(f"basis {i} does not have orthonormal columns")
            b.setflags(write=False)
            bases.append(b)
        if len({b.shape[0] for b in bases}) != 1:
            raise InvalidInput("all bases must live in the same ambient dimension")
        object.__setattr__(self, "bases", tuple(bases))
        object.__setattr__(self, "n", bases[0].shape[0])

    def project_with_id(self, x):
        x = self._check(x)
        best, best_res, best_i = None, np.inf, -1
        for i, b in enumerate(self.bases):
            p = b @ (b.T @ x)
            res = np.linalg.norm(x - p)
            if res < best_res:
                best, best_res, best_i = p, res, i
        return best, best_i

    def basis(self, component):
        return self.bases[component]

    def random_component(self, rng):
        return int(rng.integers(len(self.bases)))


def project(x, A, slack=ProjectionSlack()):
    """Nearest point of ``A`` to ``x``.

    ``slack`` is accepted for API stability; the built-in sets project exactly
    so any admissible slack is satisfied with zero excess.
    """
    if not isinstance(slack, ProjectionSlack):
        slack = ProjectionSlack(slack)
    return A.project(x)


def project_union(x, bases):
    """Project ``x`` onto the closest of the subspaces spanned by ``bases``."""
    return UnionOfSubspaces(tuple(bases)).project(x)


def distance_to_set(x, A):
    """Euclidean distance ``||x - P_A(x)||``."""
    x = as_signal(x, "x", A.n)
    return float(np.linalg.norm(x - A.project(x)))
