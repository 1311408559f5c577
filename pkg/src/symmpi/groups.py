"""Symmetry groups and their actions on data.

Permutations, block permutations of hierarchical data, orthogonal matrices,
graph automorphisms, plus uniform sampling, orbits, stabilizers, and cosets.
All finite groups expose batched enumeration so that downstream quantile
computations stay vectorized.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


class NotEnumerableError(TypeError):
    """Raised when exact enumeration is requested for a non-finite group."""


class Permutation:
    """A permutation of [0, n), stored as the image of each index."""

    __slots__ = ("mapping",)

    def __init__(self, mapping, validate: bool = True):
        m = np.asarray(mapping, dtype=np.int64)
        if validate:
            if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
                raise ValueError("mapping must be a bijection on [0, n)")
        self.mapping = m

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n), validate=False)

    @property
    def n(self) -> int:
        return self.mapping.size

    def __call__(self, i: int) -> int:
        return int(self.mapping[i])

    def compose(self, other: "Permutation") -> "Permutation":
        """(self . other)(i) = self(other(i))."""
        return Permutation(self.mapping[other.mapping], validate=False)

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.n)
        return Permutation(inv, validate=False)

    def act(self, z):
        """Permute the last axis of z: out[..., g(i)] = z[..., i]."""
        z = np.asarray(z)
        return np.take(z, self.inverse().mapping, axis=-1)

    def __eq__(self, other) -> bool:
        return isinstance(other, Permutation) and np.array_equal(self.mapping, other.mapping)

    def __hash__(self) -> int:
        return hash(tuple(self.mapping.tolist()))

    def __repr__(self) -> str:
        return f"Permutation({self.mapping.tolist()})"


class BlockPermutation:
    """Element of the wreath-type group on K blocks of M entries.

    ``outer`` relabels the blocks, ``inners[k]`` permutes the entries of
    source block k before it is moved to block outer(k).
    """

    __slots__ = ("outer", "inners")

    def __init__(self, outer: Permutation, inners: list[Permutation]):
        if outer.n != len(inners):
            raise ValueError("need one inner permutation per block")
        sizes = {p.n for p in inners}
        if len(sizes) > 1:
            raise ValueError("inner permutations must share one block size")
        self.outer = outer
        self.inners = list(inners)

    @property
    def n_blocks(self) -> int:
        return self.outer.n

    @property
    def block_size(self) -> int:
        return self.inners[0].n

    def flat(self) -> Permutation:
        """The induced permutation of [0, K*M): k*M+i -> outer(k)*M + inners[k](i)."""
        K, M = self.n_blocks, self.block_size
        out = np.empty(K * M, dtype=np.int64)
        for k in range(K):
            out[k * M : (k + 1) * M] = self.outer(k) * M + self.inners[k].mapping
        return Permutation(out, validate=False)

    def act(self, z):
        """Act on (..., K, M) or flat (..., K*M) data."""
        z = np.asarray(z)
        if z.shape[-1] == self.n_blocks * self.block_size:
            return self.flat().act(z)
        if z.ndim >= 2 and z.shape[-2:] == (self.n_blocks, self.block_size):
            flatz = z.reshape(z.shape[:-2] + (-1,))
            return self.flat().act(flatz).reshape(z.shape)
        raise ValueError("data shape does not match block structure")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, BlockPermutation)
            and self.outer == other.outer
            and all(a == b for a, b in zip(self.inners, other.inners))
        )

    def __hash__(self) -> int:
        return hash((self.outer, tuple(self.inners)))

    def __repr__(self) -> str:
        return f"BlockPermutation(outer={self.outer!r}, inners={self.inners!r})"


def sample_uniform_permutation(n: int, rng: np.random.Generator) -> Permutation:
    """Uniform draw from the symmetric group on n symbols."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return Permutation(rng.permutation(n), validate=False)


def sample_block_permutation(K: int, M: int, rng: np.random.Generator) -> BlockPermutation:
    """Uniform draw over block permutations: outer and all inners independent."""
    if K < 1 or M < 1:
        raise ValueError("K and M must be >= 1")
    outer = sample_uniform_permutation(K, rng)
    inners = [sample_uniform_permutation(M, rng) for _ in range(K)]
    return BlockPermutation(outer, inners)


def sample_haar_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform p x p orthogonal matrix via QR of a Gaussian matrix.

    The R-diagonal sign correction Q <- Q diag(sign(R_ii)) makes the law
    exactly uniform rather than merely orthogonal.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    g = rng.standard_normal((p, p))
    q, r = np.linalg.qr(g)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    return q * d


# --------------------------------------------------------------------------
# Group action contracts
# --------------------------------------------------------------------------


class GroupAction:
    """Abstract group with an action on data arrays.

    Finite groups additionally provide ``order``, ``elements`` and
    ``iter_mapping_batches`` (for permutation-like groups).
    """

    def identity(self):
        raise NotImplementedError

    def compose(self, g, h):
        raise NotImplementedError

    def inverse(self, g):
        raise NotImplementedError

    def sample(self, rng: np.random.Generator):
        raise NotImplementedError

    def act(self, g, z):
        raise NotImplementedError

    def order(self) -> int:
        raise NotEnumerableError(f"{type(self).__name__} is not enumerable")

    def elements(self):
        raise NotEnumerableError(f"{type(self).__name__} is not enumerable")

    def iter_mapping_batches(self, batch_size: int = 250_000):
        """Yield (m, n) integer arrays of permutation images, if applicable."""
        raise NotEnumerableError(f"{type(self).__name__} has no permutation form")


class TrivialGroup(GroupAction):
    """The one-element group; acts as the identity on anything."""

    def identity(self):
        return None

    def compose(self, g, h):
        return None

    def inverse(self, g):
        return None

    def sample(self, rng):
        return None

    def act(self, g, z):
        return np.asarray(z)

    def order(self) -> int:
        return 1

    def elements(self):
        return iter([None])


class SymmetricGroup(GroupAction):
    """All permutations of n symbols, acting by coordinate permutation."""

    def __init__(self, n: int):
        if n < 1:
            raise ValueError("n must be >= 1")
        self.n = n

    def identity(self) -> Permutation:
        return Permutation.identity(self.n)

    def compose(self, g: Permutation, h: Permutation) -> Permutation:
        return g.compose(h)

    def inverse(self, g: Permutation) -> Permutation:
        return g.inverse()

    def sample(self, rng) -> Permutation:
        return sample_uniform_permutation(self.n, rng)

    def act(self, g: Permutation, z):
        return g.act(z)

    def order(self) -> int:
        return math.factorial(self.n)

    def elements(self):
        return (Permutation(np.array(p), validate=False) for p in itertools.permutations(range(self.n)))

    def iter_mapping_batches(self, batch_size: int = 250_000):
        it = itertools.permutations(range(self.n))
        while True:
            chunk = list(itertools.islice(it, batch_size))
            if not chunk:
                return
            yield np.array(chunk, dtype=np.int64)

    def act_uniform_batch(self, rng, z):
        """Apply an independent uniform permutation to each row of z (..., n)."""
        z = np.asarray(z)
        return rng.permuted(z, axis=-1)


class BlockPermutationGroup(GroupAction):
    """Permutations moving whole blocks and shuffling within blocks.

    Acts on (..., K, M) arrays (or their flat (..., K*M) form); the group
    has size K! * (M!)^K.
    """

    def __init__(self, K: int, M: int):
        if K < 1 or M < 1:
            raise ValueError("K and M must be >= 1")
        self.K = K
        self.M = M

    def identity(self) -> BlockPermutation:
        return BlockPermutation(
            Permutation.identity(self.K), [Permutation.identity(self.M) for _ in range(self.K)]
        )

    def compose(self, g: BlockPermutation, h: BlockPermutation) -> BlockPermutation:
        outer = g.outer.compose(h.outer)
        inners = [g.inners[h.outer(k)].compose(h.inners[k]) for k in range(self.K)]
        return BlockPermutation(outer, inners)

    def inverse(self, g: BlockPermutation) -> BlockPermutation:
        outer = g.outer.inverse()
        inners = [g.inners[outer(k)].inverse() for k in range(self.K)]
        return BlockPermutation(outer, inners)

    def sample(self, rng) -> BlockPermutation:
        return sample_block_permutation(self.K, self.M, rng)

    def act(self, g: BlockPermutation, z):
        return g.act(z)

    def order(self) -> int:
        return math.factorial(self.K) * math.factorial(self.M) ** self.K

    def elements(self):
        outer_all = list(itertools.permutations(range(self.K)))
        inner_all = list(itertools.permutations(range(self.M)))
        for outer in outer_all:
            for inners in itertools.product(inner_all, repeat=self.K):
                yield BlockPermutation(
                    Permutation(np.array(outer), validate=False),
                    [Permutation(np.array(p), validate=False) for p in inners],
                )

    def iter_mapping_batches(self, batch_size: int = 250_000):
        buf = []
        for g in self.elements():
            buf.append(g.flat().mapping)
            if len(buf) == batch_size:
                yield np.array(buf, dtype=np.int64)
                buf = []
        if buf:
            yield np.array(buf, dtype=np.int64)

    def act_uniform_batch(self, rng, z):
        """Apply an independent uniform block permutation per row of z (..., K, M)."""
        z = np.asarray(z)
        if z.shape[-2:] != (self.K, self.M):
            raise ValueError("expected trailing shape (K, M)")
        out = rng.permuted(z, axis=-1)
        order = np.argsort(rng.random(z.shape[:-1]), axis=-1)
        return np.take_along_axis(out, order[..., None], axis=-2)


class OrthogonalGroup(GroupAction):
    """Orthogonal matrices O(p) acting on point clouds (..., p) by z @ g.T."""

    def __init__(self, p: int):
        if p < 1:
            raise ValueError("p must be >= 1")
        self.p = p

    def identity(self) -> np.ndarray:
        return np.eye(self.p)

    def compose(self, g, h) -> np.ndarray:
        return g @ h

    def inverse(self, g) -> np.ndarray:
        return g.T.copy()

    def sample(self, rng) -> np.ndarray:
        return sample_haar_orthogonal(self.p, rng)

    def act(self, g, z):
        z = np.asarray(z, dtype=float)
        return z @ g.T


class GraphAutomorphismGroup(GroupAction):
    """The explicitly enumerated automorphisms of a weighted graph."""

    def __init__(self, adjacency: np.ndarray, elements: list[Permutation]):
        self.adjacency = np.asarray(adjacency, dtype=float)
        self._elements = list(elements)
        if not any(np.array_equal(g.mapping, np.arange(self.n)) for g in self._elements):
            raise ValueError("automorphism list must contain the identity")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def identity(self) -> Permutation:
        return Permutation.identity(self.n)

    def compose(self, g, h) -> Permutation:
        return g.compose(h)

    def inverse(self, g) -> Permutation:
        return g.inverse()

    def sample(self, rng) -> Permutation:
        return self._elements[int(rng.integers(len(self._elements)))]

    def act(self, g, z):
        return g.act(z)

    def order(self) -> int:
        return len(self._elements)

    def elements(self):
        return iter(self._elements)

    def iter_mapping_batches(self, batch_size: int = 250_000):
        maps = np.array([g.mapping for g in self._elements], dtype=np.int64)
        for start in range(0, maps.shape[0], batch_size):
            yield maps[start : start + batch_size]


# --------------------------------------------------------------------------
# Automorphism enumeration and orbit machinery
# --------------------------------------------------------------------------

AUTOMORPHISM_BRUTE_FORCE_CAP = 10


def close_permutations(generators: list[Permutation]) -> list[Permutation]:
    """Close a set of permutations under composition (and hence inversion)."""
    if not generators:
        raise ValueError("need at least one generator")
    n = generators[0].n
    found = {Permutation.identity(n)}
    frontier = list(found)
    while frontier:
        new = []
        for g in generators:
            for h in frontier:
                c = g.compose(h)
                if c not in found:
                    found.add(c)
                    new.append(c)
        frontier = new
    return sorted(found, key=lambda g: tuple(g.mapping.tolist()))


def enumerate_automorphisms(
    adjacency,
    cap: int = AUTOMORPHISM_BRUTE_FORCE_CAP,
    generators: list[Permutation] | None = None,
) -> GraphAutomorphismGroup:
    """All vertex permutations g with g A g^T = A (exact weight equality).

    Brute-force backtracking over degree-signature-compatible assignments up
    to ``cap`` vertices; larger graphs require an explicit generator list,
    which is verified and closed under the group operations.
    """
    A = np.asarray(adjacency, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be a square matrix")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    n = A.shape[0]

    if generators is not None:
        for g in generators:
            if g.n != n:
                raise ValueError("generator degree does not match the graph")
            if not np.array_equal(A[np.ix_(g.mapping, g.mapping)], A):
                raise ValueError(f"{g!r} is not an automorphism")
        return GraphAutomorphismGroup(A, close_permutations(generators))

    if n > cap:
        raise ValueError(f"graph has {n} > {cap} vertices; supply generators instead")

    # Vertices can only map to vertices with the same loop weight and
    # incident-weight multiset.
    sig = [(A[i, i], tuple(sorted(A[i].tolist()))) for i in range(n)]
    candidates = [[j for j in range(n) if sig[j] == sig[i]] for i in range(n)]

    found: list[Permutation] = []
    assigned = np.full(n, -1, dtype=np.int64)
    used = np.zeros(n, dtype=bool)

    def backtrack(i: int) -> None:
        if i == n:
            found.append(Permutation(assigned.copy(), validate=False))
            return
        for j in candidates[i]:
            if used[j]:
                continue
            ok = True
            for u in range(i):
                if A[i, u] != A[j, assigned[u]]:
                    ok = False
                    break
            if ok:
                assigned[i] = j
                used[j] = True
                backtrack(i + 1)
                used[j] = False
        assigned[i] = -1

    backtrack(0)
    return GraphAutomorphismGroup(A, found)


def orbit_of_index(group: GroupAction, i: int) -> tuple[np.ndarray, int]:
    """Orbit {g(i)} of an index under a finite permutation-like group.

    Returns the sorted orbit and the stabilizer size, which satisfy
    |orbit| * |stabilizer| = |G|.
    """
    orbit: set[int] = set()
    stab = 0
    total = 0
    for maps in group.iter_mapping_batches():
        images = maps[:, i]
        orbit.update(np.unique(images).tolist())
        stab += int(np.sum(images == i))
        total += maps.shape[0]
    if len(orbit) * stab != total:
        raise AssertionError("orbit-stabilizer identity violated")
    return np.array(sorted(orbit), dtype=np.int64), stab


@dataclass(frozen=True)
class CosetDecomposition:
    """One representative per class of group elements inducing equal score maps."""

    representatives: list
    subgroup_size: int


def coset_representatives(group: GroupAction, psi, probes) -> CosetDecomposition:
    """Split a finite permutation group by the induced map g -> psi(g . z).

    Two elements land in the same class when their psi values agree on every
    probe point; the class of the identity has size |H|. ``psi`` must be
    vectorized over the leading axes of an (..., n) array.
    """
    probes = [np.asarray(p, dtype=float) for p in probes]
    if not probes:
        raise ValueError("probe set must be nonempty")
    n = probes[0].shape[-1]
    ident = tuple(float(psi(p)) for p in probes)

    try:
        batches = group.iter_mapping_batches()
    except NotEnumerableError:
        batches = None
    if batches is None:
        reps_any: dict[tuple, object] = {}
        subgroup_size = 0
        for g in group.elements():
            key = tuple(float(psi(group.act(g, p))) for p in probes)
            if key not in reps_any:
                reps_any[key] = g
            if key == ident:
                subgroup_size += 1
        return CosetDecomposition(
            representatives=list(reps_any.values()), subgroup_size=subgroup_size
        )

    reps: dict[tuple, np.ndarray] = {}
    subgroup_size = 0
    for maps in batches:
        inv = np.argsort(maps, axis=1)
        sigs = np.empty((maps.shape[0], len(probes)))
        for c, p in enumerate(probes):
            if p.shape[-1] != n:
                raise ValueError("probes must share one dimension")
            sigs[:, c] = psi(p[inv])
        for r in range(maps.shape[0]):
            key = tuple(sigs[r].tolist())
            if key not in reps:
                reps[key] = maps[r]
            if key == ident:
                subgroup_size += 1
    return CosetDecomposition(
        representatives=[Permutation(m, validate=False) for m in reps.values()],
        subgroup_size=subgroup_size,
    )


def default_probes(z, rng: np.random.Generator, n_extra: int = 8, scale: float | None = None):
    """The observed point plus random perturbations, for coset detection."""
    z = np.asarray(z, dtype=float)
    if scale is None:
        spread = float(np.std(z))
        scale = spread if spread > 0 else 1.0
    return [z] + [z + scale * rng.standard_normal(z.shape) for _ in range(n_extra)]
