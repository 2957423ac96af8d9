"""
Dense complex linear algebra primitives.

Rays (points of the projective space), subspaces (points of a Grassmannian) and
density matrices, together with the metrics used everywhere else:

- gap metric between equal-dimensional subspaces
- Fubini-Study distance between rays
- distance from a vector to a subspace (projection and wedge-quotient forms)
- exterior-power norms and the explicit compound matrix

All functions are pure; nothing here holds state.
"""

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import linalg as sla
from scipy.stats import unitary_group

from .errors import DimensionError, DomainError, NumericError


# Tolerances
RAY_TOL = 1e-9          # delta <= RAY_TOL: same point
UNIT_TOL = 1e-12        # normalisation of ray representatives and states
ORTHO_TOL = 1e-10       # orthonormality of subspace bases
PSD_TOL = 1e-12         # negative eigenvalues tolerated in a density matrix


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D complex array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries")
    return m


def as_vector(x, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=np.complex128).reshape(-1)
    if v.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name} has non-finite entries")
    return v


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def operator_norm(a) -> float:
    """Largest singular value (computed from the SVD, not by power iteration)."""
    return float(sla.svdvals(as_matrix(a))[0])


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return (a + dagger(a)) / 2


# =============================================================================
# RAYS, SUBSPACES, STATES
# =============================================================================

@dataclass(eq=False)
class Ray:
    """A point of P(C^d), stored through a unit representative."""
    vector: np.ndarray

    def __post_init__(self):
        v = as_vector(self.vector, "ray representative")
        norm = np.linalg.norm(v)
        if norm == 0:
            raise DomainError("ray representative is the zero vector")
        if abs(norm - 1) > UNIT_TOL:
            v = v / norm
        self.vector = v

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    @property
    def projector(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())

    def distance(self, other: "Ray") -> float:
        return fubini_distance(self, other)

    def same_as(self, other: "Ray", tol: float = RAY_TOL) -> bool:
        return self.dim == other.dim and fubini_distance(self, other) <= tol

    def to_list(self) -> list:
        return [[float(z.real), float(z.imag)] for z in self.vector]


@dataclass(eq=False)
class Subspace:
    """A point of the Grassmannian, stored through a column-orthonormal basis."""
    basis: np.ndarray

    def __post_init__(self):
        b = as_matrix(self.basis, "subspace basis")
        if b.shape[1] > b.shape[0]:
            raise DimensionError(f"basis has more columns than rows: {b.shape}")
        gram = dagger(b) @ b
        if np.linalg.norm(gram - np.eye(b.shape[1]), 2) > ORTHO_TOL:
            raise DomainError("subspace basis is not column-orthonormal; use Subspace.span")
        self.basis = b

    @classmethod
    def span(cls, vectors, rank_tol: float = 1e-10) -> "Subspace":
        """Orthonormal basis for the column span of `vectors` (relative rank tolerance)."""
        m = as_matrix(vectors, "spanning vectors")
        u, s, _ = sla.svd(m, full_matrices=False)
        if s[0] == 0:
            raise DomainError("cannot span a subspace from zero vectors")
        rank = int(np.sum(s > rank_tol * s[0]))
        return cls(u[:, :rank])

    @classmethod
    def line(cls, ray: Ray) -> "Subspace":
        return cls(ray.vector.reshape(-1, 1))

    @classmethod
    def coordinate(cls, ambient_dim: int, indices) -> "Subspace":
        """Span of the canonical basis vectors with the given indices."""
        return cls(np.eye(ambient_dim, dtype=np.complex128)[:, list(indices)])

    @classmethod
    def whole(cls, ambient_dim: int) -> "Subspace":
        return cls(np.eye(ambient_dim, dtype=np.complex128))

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ dagger(self.basis)

    def canonical_basis(self) -> np.ndarray:
        """Basis that depends only on the subspace, not on the stored representative.

        Gram-Schmidt on the columns pi e_0, pi e_1, ... in index order, keeping a
        column when its residual norm is at least 1e-3; each kept vector has a
        positive component along its e_k. For a coordinate subspace this returns
        the canonical basis vectors themselves.
        """
        p = self.projector
        cols = []
        for k in range(self.ambient_dim):
            c = p[:, k].copy()
            for b in cols:
                c -= (b.conj() @ c) * b
            norm = np.linalg.norm(c)
            if norm >= 1e-3:
                c = c / norm
                cols.append(c * (abs(c[k]) / c[k]) if abs(c[k]) > 0 else c)
            if len(cols) == self.dim:
                break
        if len(cols) < self.dim:
            raise NumericError("canonical basis lost rank")
        return np.column_stack(cols)

    def contains(self, x, tol: float = 1e-9) -> bool:
        return dist_to_subspace(x, self) <= tol

    def image(self, v: np.ndarray, rank_tol: float = 1e-10) -> "Subspace":
        """Orthonormalised v(self)."""
        return Subspace.span(v @ self.basis, rank_tol)

    def same_as(self, other: "Subspace", tol: float = 1e-6) -> bool:
        return self.dim == other.dim and gap_distance(self, other) <= tol

    def to_list(self) -> list:
        return [[[float(z.real), float(z.imag)] for z in row] for row in self.basis]


@dataclass(eq=False)
class DensityMatrix:
    """A state: Hermitian, positive semidefinite, unit trace."""
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix, "density matrix")
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"density matrix must be square, got {m.shape}")
        if np.max(np.abs(m - dagger(m))) > PSD_TOL * max(1.0, np.max(np.abs(m))):
            raise DomainError("density matrix is not Hermitian")
        m = hermitian_part(m)
        tr = np.trace(m).real
        if abs(tr - 1) > UNIT_TOL:
            raise DomainError(f"density matrix trace is {tr!r}, expected 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_TOL:
            raise DomainError("density matrix has a negative eigenvalue")
        self.matrix = m

    @classmethod
    def from_operator(cls, m) -> "DensityMatrix":
        """Hermitian part of m rescaled to unit trace."""
        m = hermitian_part(as_matrix(m))
        tr = np.trace(m).real
        if tr <= 0:
            raise NumericError(f"cannot normalise an operator with trace {tr!r}")
        return cls(m / tr)

    @classmethod
    def pure(cls, ray: Ray) -> "DensityMatrix":
        return cls(ray.projector)

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityMatrix":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @classmethod
    def normalized_projector(cls, q: Subspace) -> "DensityMatrix":
        return cls(q.projector / q.dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def spectrum(self) -> np.ndarray:
        """Eigenvalues in decreasing order."""
        return np.linalg.eigvalsh(self.matrix)[::-1]

    def nonzero_spectrum(self, tol: float = 1e-10) -> np.ndarray:
        ev = self.spectrum()
        return ev[ev > tol]

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))


# =============================================================================
# DECOMPOSITIONS AND METRICS
# =============================================================================

def polar_decompose(a) -> tuple:
    """Right polar decomposition a = u p with p = sqrt(a* a).

    The unitary factor is always X Y* from the SVD a = X S Y*, which also
    fixes a (deterministic) choice when a is singular.
    """
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"polar decomposition needs a square matrix, got {m.shape}")
    x, s, yh = sla.svd(m)
    u = x @ yh
    p = hermitian_part((dagger(yh) * s) @ yh)
    return u, p


def gap_distance(q1: Subspace, q2: Subspace) -> float:
    """Operator norm of the difference of the orthogonal projectors."""
    if q1.ambient_dim != q2.ambient_dim:
        raise DimensionError(f"ambient dimensions differ: {q1.ambient_dim} vs {q2.ambient_dim}")
    if q1.dim != q2.dim:
        raise DimensionError(f"subspace dimensions differ: {q1.dim} vs {q2.dim}")
    diff = q1.projector - q2.projector
    # Hermitian: the operator norm is the largest |eigenvalue|
    return float(min(1.0, np.max(np.abs(np.linalg.eigvalsh(diff)))))


def dist_to_subspace(x, q: Subspace) -> float:
    """||x - pi_q x|| for the unit vector along x."""
    v = as_vector(x)
    if v.shape[0] != q.ambient_dim:
        raise DimensionError(f"vector of length {v.shape[0]} in ambient dimension {q.ambient_dim}")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DomainError("distance of the zero vector is undefined")
    v = v / norm
    return float(np.linalg.norm(v - q.basis @ (dagger(q.basis) @ v)))


def wedge_volume(vectors) -> float:
    """||y_1 ^ ... ^ y_p|| = sqrt(det Gram(y_1, ..., y_p))."""
    m = as_matrix(vectors)
    gram = dagger(m) @ m
    return float(np.sqrt(max(np.linalg.det(gram).real, 0.0)))


def wedge_distance(x, vectors) -> float:
    """||x ^ y_1 ^ ... ^ y_p|| / ||y_1 ^ ... ^ y_p|| for linearly independent y's."""
    v = as_vector(x)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DomainError("distance of the zero vector is undefined")
    ys = as_matrix(vectors)
    if ys.shape[0] != v.shape[0]:
        raise DimensionError(f"vector of length {v.shape[0]} against vectors of length {ys.shape[0]}")
    denom = wedge_volume(ys)
    if denom == 0:
        raise DomainError("spanning vectors are linearly dependent")
    return wedge_volume(np.column_stack([v / norm, ys])) / denom


def fubini_distance(x: Ray, y: Ray) -> float:
    """delta(x, y) = sqrt(1 - |<x, y>|^2), evaluated as ||y - <x, y> x|| (accurate to roundoff near 0)."""
    if x.dim != y.dim:
        raise DimensionError(f"ray dimensions differ: {x.dim} vs {y.dim}")
    residual = y.vector - np.vdot(x.vector, y.vector) * x.vector
    return float(min(np.linalg.norm(residual), 1.0))


def fubini_distances(xs: np.ndarray, ys: np.ndarray, block: int = 256) -> np.ndarray:
    """Pairwise delta between the unit columns of xs (d x m) and ys (d x k)."""
    xs, ys = np.asarray(xs), np.asarray(ys)
    if xs.shape[0] != ys.shape[0]:
        raise DimensionError(f"ray dimensions differ: {xs.shape[0]} vs {ys.shape[0]}")
    out = np.empty((xs.shape[1], ys.shape[1]))
    for start in range(0, xs.shape[1], block):
        x = xs[:, start:start + block]
        g = dagger(x) @ ys
        residual = ys[:, np.newaxis, :] - x[:, :, np.newaxis] * g[np.newaxis]
        out[start:start + block] = np.linalg.norm(residual, axis=0)
    return np.minimum(out, 1.0)


def wedge_norm(a, p: int) -> float:
    """||^p a||: product of the p largest singular values."""
    m = as_matrix(a)
    if not 1 <= p <= min(m.shape):
        raise DomainError(f"p={p} out of range for a {m.shape[0]}x{m.shape[1]} matrix")
    s = sla.svdvals(m)
    return float(np.prod(s[:p]))


def exterior_power(a, p: int) -> np.ndarray:
    """Explicit matrix of ^p a in the basis of increasing index p-tuples (p x p minors)."""
    m = as_matrix(a)
    if not 1 <= p <= min(m.shape):
        raise DomainError(f"p={p} out of range for a {m.shape[0]}x{m.shape[1]} matrix")
    rows = list(combinations(range(m.shape[0]), p))
    cols = list(combinations(range(m.shape[1]), p))
    out = np.empty((len(rows), len(cols)), dtype=np.complex128)
    for i, r in enumerate(rows):
        sub = m[list(r), :]
        for j, c in enumerate(cols):
            out[i, j] = np.linalg.det(sub[:, list(c)])
    return out


def numerical_rank(h: np.ndarray, rel_tol: float) -> int:
    """Number of eigenvalues of the PSD matrix h above rel_tol times the largest."""
    ev = np.linalg.eigvalsh(hermitian_part(h))
    top = ev[-1]
    if top <= 0:
        return 0
    return int(np.sum(ev > rel_tol * top))


# =============================================================================
# RANDOMNESS
# =============================================================================

def make_rng(seed: Optional[int]) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    if seed is None:
        return np.random.Generator(np.random.Philox())
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def spawn_seeds(seed: int, n: int) -> list:
    """n child 64-bit seeds derived deterministically from seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def random_vector(dim: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(dim) + 1j * rng.standard_normal(dim)


def random_ray(dim: int, rng: np.random.Generator) -> Ray:
    """Uniform point of P(C^dim): normalised standard complex Gaussian."""
    return Ray(random_vector(dim, rng))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()).reshape(1, 1)
    return unitary_group.rvs(dim, random_state=rng)


def random_density(dim: int, rng: np.random.Generator, rank: Optional[int] = None) -> DensityMatrix:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    return DensityMatrix.from_operator(g @ dagger(g))


def random_subspace(ambient_dim: int, dim: int, rng: np.random.Generator) -> Subspace:
    return Subspace(random_unitary(ambient_dim, rng)[:, :dim])
