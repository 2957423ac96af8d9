"""
Isometry families, induced unitary groups and ergodic measures.

A family assigns to each tracked dark subspace D an isometry J_D: C^r -> D.
Every Kraus matrix v then induces u_{v,D} in SU(r), proportional to
J_{vD}* v J_D; the closed group G_J these generate decides how the
Pi-invariant measures look:

    nu_{x,J} = law of J_D u x  with D ~ chi_inv and u ~ Haar(G_J)

and the invariant measure is unique exactly when G_J acts transitively on
P(C^r).
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import networkx as nx
import numpy as np
from scipy import linalg as sla

from .channel import KrausEnsemble
from .darkspace import (
    DEDUP_TOL,
    MIN_WEIGHT,
    DarkAtlas,
    EmpiricalDarkMeasure,
    dark_chain_graph,
    find_atom,
    image_subspace,
    kernel_weights,
)
from .errors import (
    DarknessViolationError,
    DimensionError,
    DomainError,
    MissingEntryError,
    PreconditionError,
    ReachabilityError,
    SizeError,
)
from .linalg import RAY_TOL, DensityMatrix, Ray, Subspace, dagger, gap_distance, make_rng, operator_norm
from .measures import EmpiricalMeasure, cluster, wasserstein1
from .trajectory import as_rng, sample_index, step_ray, word_product

logger = logging.getLogger(__name__)


ISOMETRY_TOL = 1e-10
IMAGE_TOL = 1e-9
UNITARY_TOL = 1e-9          # generators and elements must be in SU(r) within this
GROUP_EPS = 1e-6            # element dedup in operator norm
INDUCED_TOL = 1e-6          # non-unitarity tolerated in an induced map
GROUP_CAP = 4096
HAAR_WORD_LENGTH = 64
LIE_TOL = 1e-6
LIE_NEIGHBOURHOOD = 0.5     # ||g - Id|| below this: logm is taken
LIE_MAX_LOGS = 64
SMART_TOL = 1e-8
WORD_BUDGET = 10_000
MAX_WORD_LENGTH = 20

FULL_SU = "full_su"
SYMPLECTIC_CONJUGATE = "symplectic_conjugate"
NOT_TRANSITIVE = "not_transitive"
UNDECIDED = "undecided"

FINITE = "finite"
CONTINUOUS = "continuous"


# =============================================================================
# ISOMETRY FAMILIES
# =============================================================================

@dataclass(eq=False)
class IsometryFamily:
    r_m: int
    entries: list = field(default_factory=list)
    center_index: Optional[int] = None
    dedup_tol: float = DEDUP_TOL

    def __post_init__(self):
        entries, self.entries = self.entries, []
        for q, j in entries:
            self.add(q, j)

    def add(self, q: Subspace, j: np.ndarray) -> int:
        j = np.asarray(j, dtype=np.complex128)
        if j.shape != (q.ambient_dim, self.r_m):
            raise DimensionError(f"isometry of shape {j.shape} for a {self.r_m}-dim subspace of C^{q.ambient_dim}")
        if np.linalg.norm(dagger(j) @ j - np.eye(self.r_m), 2) > ISOMETRY_TOL:
            raise DomainError("J_D is not an isometry")
        gap = gap_distance(Subspace(j), q)
        if gap > IMAGE_TOL:
            logger.warning("isometry image differs from its subspace by gap %.2e", gap)
        self.entries.append((q, j))
        return len(self.entries) - 1

    def index_of(self, q: Subspace) -> Optional[int]:
        return find_atom(self.subspaces, q, self.dedup_tol)

    def lookup(self, q: Subspace) -> np.ndarray:
        idx = self.index_of(q)
        if idx is None:
            raise MissingEntryError(f"isometry family has no entry for this {q.dim}-dim subspace")
        return self.entries[idx][1]

    @property
    def subspaces(self) -> list:
        return [q for q, _ in self.entries]

    @property
    def center(self) -> Optional[Subspace]:
        return None if self.center_index is None else self.entries[self.center_index][0]

    def __len__(self):
        return len(self.entries)

    def to_dict(self) -> dict:
        return {
            "r_m": self.r_m,
            "center_index": self.center_index,
            "isometries": [_matrix_doc(j) for _, j in self.entries],
        }


def _matrix_doc(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _word_path(graph: nx.DiGraph, target: int, paths: dict) -> list:
    """Kraus indices along the shortest path source -> target, in application order."""
    nodes = paths[target]
    return [graph[a][b]["kraus"] for a, b in zip(nodes, nodes[1:])]


def normalized_image(w: np.ndarray, j: np.ndarray) -> np.ndarray:
    """w J / sqrt(tr(w pi w*) / r)."""
    wj = w @ j
    scale = np.linalg.norm(wj) ** 2 / j.shape[1]
    if scale <= 1e-24:
        raise DomainError("word annihilates the subspace")
    return wj / np.sqrt(scale)


def build_smart_family(e: KrausEnsemble, atlas: DarkAtlas, chi: EmpiricalDarkMeasure,
                       center: Subspace, j_center: Optional[np.ndarray] = None) -> IsometryFamily:
    """D_c-smart family: J_D proportional to w J_c for a word w with w D_c = D.

    Words are shortest paths in the dark-chain graph, each edge labelled by
    the smallest Kraus index realising it. j_center defaults to the
    canonical basis of the center.
    """
    atoms = list(atlas.representatives)
    for q in chi.atoms:
        if find_atom(atoms, q, atlas.dedup_tol) is None:
            atoms.append(q)
    c = find_atom(atoms, center, atlas.dedup_tol)
    if c is None:
        raise PreconditionError("center is not an atlas subspace")
    j_c = center.canonical_basis() if j_center is None else np.asarray(j_center, dtype=np.complex128)

    graph = dark_chain_graph(e, atoms, atlas.dedup_tol)
    paths = nx.single_source_shortest_path(graph, c)
    fam = IsometryFamily(atlas.r_m, dedup_tol=atlas.dedup_tol)
    fam.center_index = fam.add(atoms[c], j_c)
    for q in chi.atoms:
        target = find_atom(atoms, q, atlas.dedup_tol)
        if target == c:
            continue
        if target not in paths:
            raise ReachabilityError("a support atom of chi is not reachable from the center")
        word = _word_path(graph, target, paths)
        fam.add(q, normalized_image(word_product(e, word), j_c))
        logger.debug("smart family: atom %d reached by word %s", target, word)
    logger.info("smart family with %d entries", len(fam))
    return fam


def embedding_family(atoms: Sequence[Subspace], isometries: Optional[Sequence[np.ndarray]] = None,
                     twists: Optional[dict] = None) -> IsometryFamily:
    """Family from chosen isometries (canonical bases by default), each optionally twisted.

    twists maps an atom index to an r x r unitary applied on the right.
    """
    r = atoms[0].dim
    fam = IsometryFamily(r)
    for k, q in enumerate(atoms):
        j = q.canonical_basis() if isometries is None else np.asarray(isometries[k], dtype=np.complex128)
        if twists and k in twists:
            j = j @ np.asarray(twists[k], dtype=np.complex128)
        fam.add(q, j)
    return fam


# =============================================================================
# INDUCED SPECIAL UNITARIES
# =============================================================================

def special_unitary_phase(u: np.ndarray) -> np.ndarray:
    """u exp(-i arg det u / r), so that det = 1."""
    r = u.shape[0]
    return u * np.exp(-1j * np.angle(np.linalg.det(u)) / r)


def canonical_su(u: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Representative of u Z_r: det 1 and the first nonzero entry (row-major) with arg in [0, 2pi/r)."""
    u = special_unitary_phase(u)
    r = u.shape[0]
    flat = u.ravel()
    first = flat[np.argmax(np.abs(flat) > tol)]
    sector = 2 * np.pi / r
    k = int(np.floor((np.mod(np.angle(first), 2 * np.pi) + 1e-9) / sector)) % r
    return u * np.exp(-1j * sector * k)


def is_special_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    r = u.shape[0]
    return (np.linalg.norm(dagger(u) @ u - np.eye(r), 2) <= tol
            and abs(np.linalg.det(u) - 1) <= tol)


def induced_unitary(fam: IsometryFamily, v: np.ndarray, q: Subspace, tol: float = INDUCED_TOL,
                    canonical: bool = True) -> np.ndarray:
    """u_{v,D} in SU(r): J_{vD}* v J_D scaled to unit top singular value, det fixed to 1."""
    if np.linalg.norm(v @ q.basis) ** 2 <= 1e-12:
        raise DomainError("v annihilates the subspace (tr(v pi_D v*) <= 1e-12)")
    j_d = fam.lookup(q)
    j_vd = fam.lookup(image_subspace(v, q))
    m = dagger(j_vd) @ v @ j_d
    m = m / sla.svdvals(m)[0]
    residual = float(np.linalg.norm(dagger(m) @ m - np.eye(fam.r_m), 2))
    if residual > tol:
        raise DarknessViolationError(residual)
    return canonical_su(m) if canonical else special_unitary_phase(m)


def dedup_unitaries(mats: Sequence[np.ndarray], eps: float = GROUP_EPS) -> list:
    out: list = []
    for u in mats:
        if not any(np.linalg.norm(u - w, 2) <= eps for w in out):
            out.append(u)
    return out


def induced_generators(fam: IsometryFamily, e: KrausEnsemble,
                       chi: Optional[EmpiricalDarkMeasure] = None) -> list:
    """u_{v_i,D} for every item and every support atom, deduplicated."""
    atoms = fam.subspaces if chi is None else chi.atoms
    gens = []
    for q in atoms:
        for i, w in enumerate(kernel_weights(e, q)):
            if w < MIN_WEIGHT:
                continue
            gens.append(induced_unitary(fam, e.matrices[i], q))
    return dedup_unitaries(gens)


# =============================================================================
# GROUP CLOSURE
# =============================================================================

@dataclass(eq=False)
class UnitaryGroupClosure:
    r_m: int
    generators: list
    kind: str
    elements: list = field(default_factory=list)
    lie_dim: int = 0
    eps: float = GROUP_EPS
    classification: Optional[str] = None

    @property
    def is_finite(self) -> bool:
        return self.kind == FINITE

    @property
    def order(self) -> Optional[int]:
        return len(self.elements) if self.is_finite else None

    def contains(self, u: np.ndarray) -> bool:
        return any(np.linalg.norm(u - g, 2) <= self.eps for g in self.elements)

    def to_dict(self) -> dict:
        doc = {
            "kind": self.kind,
            "r_m": self.r_m,
            "generators": [_matrix_doc(g) for g in self.generators],
            "lie_dim": self.lie_dim,
            "classification": self.classification,
        }
        if self.is_finite:
            doc["order"] = len(self.elements)
            doc["elements"] = [_matrix_doc(g) for g in self.elements]
        return doc


def group_closure(generators: Sequence[np.ndarray], cap: int = GROUP_CAP,
                  eps: float = GROUP_EPS) -> UnitaryGroupClosure:
    """Breadth-first closure under products with the generators and their inverses.

    Elements are compared as matrices of SU(r) (operator norm within eps), so
    -Id and Id are different elements. More than `cap` elements means the
    closure is treated as a continuous group.
    """
    gens = [np.asarray(g, dtype=np.complex128) for g in generators]
    if not gens:
        raise DomainError("group closure needs at least one generator")
    r = gens[0].shape[0]
    for g in gens:
        if g.shape != (r, r):
            raise DimensionError(f"generator of shape {g.shape} among {r}x{r} generators")
        if not is_special_unitary(g):
            raise DomainError("generators must lie in SU(r) within 1e-9")
    moves = dedup_unitaries(gens + [dagger(g) for g in gens], eps)

    store = np.empty((cap, r, r), dtype=np.complex128)
    store[0] = np.eye(r)
    n = 1
    screen = eps * np.sqrt(r)
    queue = deque([0])
    while queue:
        g = store[queue.popleft()]
        for s in moves:
            h = s @ g
            close = np.linalg.norm(store[:n] - h, axis=(1, 2)) <= screen
            if any(np.linalg.norm(store[k] - h, 2) <= eps for k in np.flatnonzero(close)):
                continue
            if n >= cap:
                lie_dim = lie_algebra_dimension(list(store[:n]))
                logger.info("closure exceeded %d elements: continuous, lie_dim=%d", cap, lie_dim)
                return UnitaryGroupClosure(r, gens, CONTINUOUS, [], lie_dim, eps)
            store[n] = h
            queue.append(n)
            n += 1
    logger.info("closure is finite with %d elements", n)
    return UnitaryGroupClosure(r, gens, FINITE, list(store[:n]), 0, eps)


def _skew_vector(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x.real.ravel(), x.imag.ravel()])


def _basis_rank(vectors: list, tol: float) -> list:
    """Orthonormal basis (as vectors) of the real span of unit vectors."""
    if not vectors:
        return []
    _, s, vh = np.linalg.svd(np.array(vectors), full_matrices=False)
    return list(vh[:int(np.sum(s > tol))])


def lie_algebra_dimension(elements: Sequence[np.ndarray], tol: float = LIE_TOL,
                          max_logs: int = LIE_MAX_LOGS) -> int:
    """Dimension of the real Lie algebra spanned by logs of near-identity elements.

    Near-identity elements are taken both from the list itself and from
    quotients g_a* g_b of nearest neighbours; the span is then closed under
    commutators.
    """
    pool = np.array(elements[:1024])
    r = pool.shape[1]
    eye = np.eye(r)
    candidates = list(pool)
    if len(pool) > 1:
        flat = pool.reshape(len(pool), -1)
        # all elements are unitary: ||a - b||_F^2 = 2r - 2 Re <a, b>
        dist = 2 * r - 2 * np.real(flat.conj() @ flat.T)
        np.fill_diagonal(dist, np.inf)
        nearest = np.argmin(dist, axis=1)
        candidates += [dagger(pool[a]) @ pool[b] for a, b in enumerate(nearest)]
    near = [(operator_norm(g - eye), g) for g in candidates]
    near = sorted((d, k) for k, (d, _) in enumerate(near) if tol < d < LIE_NEIGHBOURHOOD)
    logs = []
    for _, k in near[:max_logs]:
        x = sla.logm(candidates[k])
        x = (x - dagger(x)) / 2
        norm = np.linalg.norm(x)
        if norm > tol:
            logs.append(_skew_vector(x / norm))
    basis = _basis_rank(logs, tol)
    limit = r * r - 1
    while basis and len(basis) < limit:
        mats = [(b[:r * r] + 1j * b[r * r:]).reshape(r, r) for b in basis]
        brackets = []
        for a in range(len(mats)):
            for b in range(a + 1, len(mats)):
                c = mats[a] @ mats[b] - mats[b] @ mats[a]
                norm = np.linalg.norm(c)
                if norm > tol:
                    brackets.append(_skew_vector(c / norm))
        grown = _basis_rank(list(basis) + brackets, tol)
        if len(grown) == len(basis):
            break
        basis = grown
    return min(len(basis), limit)


def symplectic_residual(generators: Sequence[np.ndarray]) -> tuple:
    """Least-squares antisymmetric J with u^T J u = J for every generator.

    Returns (residual, J); residual is the smallest singular value of the
    stacked linear system on unit-norm antisymmetric J, and is infinite when
    the best J is degenerate.
    """
    r = generators[0].shape[0]
    if r % 2:
        return float("inf"), None
    pairs = [(a, b) for a in range(r) for b in range(a + 1, r)]
    basis = []
    for a, b in pairs:
        m = np.zeros((r, r), dtype=np.complex128)
        m[a, b], m[b, a] = 1 / np.sqrt(2), -1 / np.sqrt(2)
        basis.append(m)
    rows = []
    for u in generators:
        rows.append(np.column_stack([(u.T @ m @ u - m).ravel() for m in basis]))
    system = np.vstack(rows)
    _, s, vh = np.linalg.svd(system)
    coeffs = vh[-1].conj()
    j = sum(c * m for c, m in zip(coeffs, basis))
    sv = sla.svdvals(j)
    if sv[-1] < 1e-6 * sv[0]:
        return float("inf"), None
    return float(s[-1]), j / np.sqrt(np.mean(sv ** 2))


def classify_transitivity(g: UnitaryGroupClosure) -> str:
    """full_su | symplectic_conjugate | not_transitive | undecided."""
    r = g.r_m
    if r == 1:
        verdict = FULL_SU
    elif g.is_finite:
        verdict = NOT_TRANSITIVE
    elif g.lie_dim == r * r - 1:
        verdict = FULL_SU
    elif r % 2 == 0 and g.lie_dim == r * (r + 1) // 2 and symplectic_residual(g.generators)[0] <= 1e-8:
        verdict = SYMPLECTIC_CONJUGATE
    elif g.lie_dim < 2 * (r - 1):
        # orbits of a group of dimension < dim_R P(C^r) cannot be open
        verdict = NOT_TRANSITIVE
    else:
        verdict = UNDECIDED
    g.classification = verdict
    return verdict


def is_unique_invariant(verdict: str) -> bool:
    """The Pi-invariant measure is unique iff G_J acts transitively."""
    return verdict in (FULL_SU, SYMPLECTIC_CONJUGATE)


# =============================================================================
# HAAR SAMPLING AND ORBITS
# =============================================================================

def haar_sample(g: UnitaryGroupClosure, rng, length: int = HAAR_WORD_LENGTH) -> np.ndarray:
    """Uniform element (finite) or a random word of `length` generators and inverses."""
    rng = as_rng(rng)
    if g.is_finite:
        return g.elements[int(rng.integers(len(g.elements)))]
    moves = list(g.generators) + [dagger(u) for u in g.generators]
    u = np.eye(g.r_m, dtype=np.complex128)
    for k in rng.integers(len(moves), size=length):
        u = moves[k] @ u
    return u


def orbit(x: Ray, g: UnitaryGroupClosure, tol: float = RAY_TOL) -> list:
    """Distinct rays u x over the elements of a finite closure."""
    if not g.is_finite:
        raise PreconditionError("orbit enumeration needs a finite closure")
    if x.dim != g.r_m:
        raise DimensionError(f"ray of dimension {x.dim} for SU({g.r_m})")
    centers, _ = cluster([Ray(u @ x.vector) for u in g.elements], tol)
    return centers


# =============================================================================
# ERGODIC MEASURES
# =============================================================================

@dataclass(eq=False)
class ErgodicSampleSet:
    base: Union[Ray, DensityMatrix]
    samples: list
    atom_labels: np.ndarray
    centers: Optional[list] = None
    center_weights: Optional[np.ndarray] = None

    @property
    def is_ray(self) -> bool:
        return isinstance(self.base, Ray)

    def __len__(self):
        return len(self.samples)

    def to_measure(self, merge_tol: float = 1e-6) -> EmpiricalMeasure:
        if self.centers is not None:
            return EmpiricalMeasure(list(self.centers), self.center_weights)
        return EmpiricalMeasure.from_samples(self.samples, merge_tol=merge_tol)


def _density_metric(a: DensityMatrix, b: DensityMatrix) -> float:
    return float(np.linalg.norm(a.matrix - b.matrix, 2))


def sample_ergodic_measure(fam: IsometryFamily, chi: EmpiricalDarkMeasure,
                           base: Union[Ray, DensityMatrix], g: UnitaryGroupClosure,
                           n_samples: int, seed: int = 0, cluster_tol: float = 1e-6) -> ErgodicSampleSet:
    """Samples of nu_{x,J} (rays: J_D u x) or nu_{rho,J} (states: J_D u rho u* J_D*)."""
    if base.dim != fam.r_m:
        raise DimensionError(f"base of dimension {base.dim} for r_m = {fam.r_m}")
    rng = make_rng(seed)
    isometries = [fam.lookup(q) for q in chi.atoms]
    samples = []
    labels = np.empty(n_samples, dtype=np.int64)
    for n in range(n_samples):
        k = chi.sample(rng)
        j = isometries[k]
        u = haar_sample(g, rng)
        labels[n] = k
        if isinstance(base, Ray):
            samples.append(Ray(j @ (u @ base.vector)))
        else:
            a = j @ u
            samples.append(DensityMatrix.from_operator(a @ base.matrix @ dagger(a)))
    out = ErgodicSampleSet(base, samples, labels)
    if g.is_finite:
        metric = None if isinstance(base, Ray) else _density_metric
        centers, members = (cluster(samples, cluster_tol) if metric is None
                            else cluster(samples, cluster_tol, metric))
        counts = np.bincount(members, minlength=len(centers)).astype(np.float64)
        out.centers, out.center_weights = centers, counts / counts.sum()
        logger.info("ergodic sample: %d samples in %d atoms", n_samples, len(centers))
    return out


def density_orbit_spectrum(sample_set: ErgodicSampleSet, tol: float = 1e-10) -> float:
    """Largest deviation between the nonzero spectra of the samples and of the base state."""
    if sample_set.is_ray:
        raise PreconditionError("spectrum check applies to density samples")
    ref = sample_set.base.nonzero_spectrum(tol)
    worst = 0.0
    for rho in sample_set.samples:
        spec = rho.spectrum()[:len(ref)]
        worst = max(worst, float(np.max(np.abs(spec - ref))))
    return worst


# =============================================================================
# STATISTICAL CHECKS
# =============================================================================

@dataclass
class InvarianceResult:
    distance: float
    null_mean: float
    standard_error: float
    method: str
    n_points: int

    @property
    def excess(self) -> float:
        """W1 above what two independent halves of the sample show."""
        return self.distance - self.null_mean

    @property
    def ratio(self) -> float:
        if self.standard_error > 0:
            return self.excess / self.standard_error
        return 0.0 if self.excess <= 1e-12 else float("inf")

    def to_dict(self) -> dict:
        return {"w1": self.distance, "null_w1": self.null_mean, "excess": self.excess,
                "bootstrap_se": self.standard_error, "ratio": self.ratio,
                "method": self.method, "n_points": self.n_points}


def invariance_residual(samples: Union[ErgodicSampleSet, Sequence[Ray]], e: KrausEnsemble,
                        seed: int = 0, n_boot: int = 50, max_support: int = 512,
                        merge_tol: float = 1e-6) -> InvarianceResult:
    """W1 (Fubini ground cost) between a one-step pushed half of the sample and the other half.

    Under invariance the pushed half is an independent draw of the same law as
    the other half, so the null distribution of the distance is that of W1
    between two random halves of the unpushed sample; n_boot such splits give
    its mean and spread. Atomic samples are compared as histograms over merged
    atoms; otherwise halves of at most max_support points are matched.
    """
    points = list(samples.samples if isinstance(samples, ErgodicSampleSet) else samples)
    if not points:
        raise PreconditionError("invariance residual needs a nonempty sample")
    rng = make_rng(seed)
    n = len(points)
    half = max(n // 2, 1)

    def split():
        if n < 2:
            return np.zeros(1, dtype=int), np.zeros(1, dtype=int)
        p = rng.permutation(n)
        return p[:half], p[half:2 * half]

    a_idx, b_idx = split()
    pushed = [step_ray(e, points[i], rng)[1] for i in a_idx]

    try:
        centers, labels = cluster(points + pushed, merge_tol, max_centers=max_support)
    except SizeError:
        centers = None
    if centers is not None:
        k = len(centers)
        point_labels = labels[:n]

        def hist(lbls):
            return EmpiricalMeasure(centers, np.bincount(lbls, minlength=k) / len(lbls))

        distance = wasserstein1(hist(labels[n:]), hist(point_labels[b_idx]))
        boots = []
        for _ in range(n_boot):
            a, b = split()
            boots.append(wasserstein1(hist(point_labels[a]), hist(point_labels[b])))
        method = "atoms"
        n_points = k
    else:
        m = min(half, max_support)
        distance = wasserstein1(EmpiricalMeasure.uniform(pushed[:m]),
                                EmpiricalMeasure.uniform([points[i] for i in b_idx[:m]]))
        boots = []
        for _ in range(n_boot):
            a, b = split()
            boots.append(wasserstein1(EmpiricalMeasure.uniform([points[i] for i in a[:m]]),
                                      EmpiricalMeasure.uniform([points[i] for i in b[:m]])))
        method = "subsample"
        n_points = m
    null = np.asarray(boots) if boots else np.zeros(1)
    result = InvarianceResult(float(distance), float(null.mean()), float(null.std()), method, n_points)
    logger.info("invariance: W1 %.3e, null %.3e +- %.3e (%s)", distance, result.null_mean,
                result.standard_error, method)
    return result


@dataclass
class SmartnessReport:
    residuals: dict
    words_tested: int
    tol: float = SMART_TOL

    @property
    def certified(self) -> bool:
        return all(r <= self.tol for r in self.residuals.values())

    @property
    def worst(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    def to_dict(self) -> dict:
        return {"certified": self.certified, "worst_residual": self.worst,
                "words_tested": self.words_tested,
                "residuals": {str(k): v for k, v in sorted(self.residuals.items())}}


def proportionality_residual(a: np.ndarray, b: np.ndarray) -> float:
    """min over phi of ||a - e^{i phi} b|| (Frobenius); the optimum is phi = arg tr(b* a)."""
    phase = np.angle(np.trace(dagger(b) @ a))
    return float(np.linalg.norm(a - np.exp(1j * phase) * b))


def check_smart(fam: IsometryFamily, chi: EmpiricalDarkMeasure, e: KrausEnsemble,
                word_budget: int = WORD_BUDGET, max_len: int = MAX_WORD_LENGTH,
                seed: int = 0, tol: float = SMART_TOL) -> SmartnessReport:
    """Search words w with w D_c = D and report min_phase ||J_D - e^{i phi} w J_c / scale||.

    Candidate words are the shortest dark-chain paths plus every prefix of
    random dark-chain walks from the center, up to word_budget words.
    """
    if fam.center_index is None:
        raise PreconditionError("smartness is defined relative to a center")
    center, j_c = fam.entries[fam.center_index]
    targets = {}
    for q in chi.atoms:
        idx = fam.index_of(q)
        if idx is None:
            raise MissingEntryError("family has no entry for a support atom of chi")
        targets[idx] = fam.entries[idx][1]
    best = {idx: (0.0 if idx == fam.center_index else np.inf) for idx in targets}
    subspaces = fam.subspaces
    tested = 0

    def consider(w: np.ndarray, q: Subspace):
        idx = find_atom(subspaces, q, fam.dedup_tol)
        if idx in best and best[idx] > tol:
            res = proportionality_residual(targets[idx], normalized_image(w, j_c))
            best[idx] = min(best[idx], res)

    graph = dark_chain_graph(e, subspaces, fam.dedup_tol)
    paths = nx.single_source_shortest_path(graph, fam.center_index)
    for target in targets:
        if target in paths and target != fam.center_index:
            consider(word_product(e, _word_path(graph, target, paths)),
                     subspaces[target])
            tested += 1

    rng = make_rng(seed)
    while tested < word_budget and any(v > tol for v in best.values()):
        w = np.eye(e.dim, dtype=np.complex128)
        q = center
        for _ in range(max_len):
            i = sample_index(kernel_weights(e, q), rng)
            w = e.matrices[i] @ w
            q = image_subspace(e.matrices[i], q)
            consider(w, q)
            tested += 1
            if tested >= word_budget:
                break

    unreached = [idx for idx, v in best.items() if not np.isfinite(v)]
    if unreached:
        raise ReachabilityError(f"{len(unreached)} support atoms not reached within {word_budget} words")
    report = SmartnessReport({k: float(v) for k, v in best.items()}, tested, tol)
    logger.info("smartness check: certified=%s, worst residual %.2e, %d words",
                report.certified, report.worst, tested)
    return report


def family_conjugator(fam: IsometryFamily, other: IsometryFamily, q: Optional[Subspace] = None) -> np.ndarray:
    """Q = J_q* J~_q relating two families at the subspace q (default: the center of `other`).

    nu_{x, J~} is then compared with nu_{Q x, J}.
    """
    q = other.center if q is None else q
    if q is None:
        raise PreconditionError("no subspace given and the other family has no center")
    mat = dagger(fam.lookup(q)) @ other.lookup(q)
    residual = float(np.linalg.norm(dagger(mat) @ mat - np.eye(fam.r_m), 2))
    if residual > 1e-6:
        logger.warning("family conjugator is far from unitary (residual %.2e); matching is ill-conditioned",
                       residual)
    return mat
