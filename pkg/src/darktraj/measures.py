"""
Empirical measures and exact small-support optimal transport.

Measures are finite lists of points with weights and an injected ground
metric (Fubini-Study for rays, gap for subspaces). W1 is solved exactly:
an assignment problem for equal-size uniform measures, the transport linear
program otherwise.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import csc_matrix
from scipy.stats import linregress

from .channel import KrausEnsemble
from .darkspace import DarkAtlas, EmpiricalDarkMeasure, find_atom, stationary_dark_measure, step_dark_chain
from .errors import DimensionError, DomainError, NumericError, SizeError
from .linalg import Ray, dagger, fubini_distance, fubini_distances, gap_distance, make_rng

logger = logging.getLogger(__name__)


MAX_SUPPORT = 512
WEIGHT_TOL = 1e-12

Metric = Callable[[object, object], float]


@dataclass(eq=False)
class EmpiricalMeasure:
    points: list
    weights: np.ndarray
    metric: Metric = fubini_distance

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != len(self.points) or not self.points:
            raise DomainError(f"{w.shape[0]} weights for {len(self.points)} points")
        if np.any(w < 0) or abs(w.sum() - 1) > WEIGHT_TOL:
            raise DomainError(f"weights must be non-negative and sum to 1 (sum {w.sum()!r})")
        self.weights = w

    @classmethod
    def uniform(cls, points: Sequence, metric: Metric = fubini_distance) -> "EmpiricalMeasure":
        return cls(list(points), np.full(len(points), 1.0 / len(points)), metric)

    @classmethod
    def from_samples(cls, points: Sequence, metric: Metric = fubini_distance,
                     merge_tol: float = 1e-6) -> "EmpiricalMeasure":
        """Merge samples closer than merge_tol into weighted atoms."""
        centers, labels = cluster(points, merge_tol, metric)
        c = np.bincount(labels, minlength=len(centers)).astype(np.float64)
        return cls(centers, c / c.sum(), metric)

    @classmethod
    def from_dark_measure(cls, chi: EmpiricalDarkMeasure) -> "EmpiricalMeasure":
        return cls(list(chi.atoms), chi.weights, gap_distance)

    def __len__(self):
        return len(self.points)

    @property
    def is_uniform(self) -> bool:
        return bool(np.allclose(self.weights, 1.0 / len(self.points), rtol=0, atol=1e-15))


# =============================================================================
# GROUND COSTS AND CLUSTERING
# =============================================================================

def _ray_matrix(points) -> np.ndarray:
    return np.column_stack([p.vector for p in points])


def cost_matrix(xs: Sequence, ys: Sequence, metric: Metric) -> np.ndarray:
    if metric is fubini_distance and isinstance(xs[0], Ray) and isinstance(ys[0], Ray):
        return fubini_distances(_ray_matrix(xs), _ray_matrix(ys))
    return np.array([[metric(x, y) for y in ys] for x in xs], dtype=np.float64)


def cluster(points: Sequence, tol: float, metric: Metric = fubini_distance,
            max_centers: Optional[int] = None) -> tuple:
    """Greedy clustering: every point joins the nearest existing center within tol.

    Returns (centers, labels); centers are in order of first appearance.
    Raises SizeError once more than max_centers centers are needed.
    """
    centers: list = []
    labels = np.empty(len(points), dtype=np.int64)

    def add(n, p):
        if max_centers is not None and len(centers) >= max_centers:
            raise SizeError(f"more than {max_centers} clusters at tolerance {tol:g}")
        labels[n] = len(centers)
        centers.append(p)

    if metric is fubini_distance and points and isinstance(points[0], Ray):
        buf = np.empty((points[0].dim, 64), dtype=np.complex128)
        for n, p in enumerate(points):
            k = len(centers)
            if k:
                dist = fubini_distances(buf[:, :k], p.vector[:, np.newaxis])[:, 0]
                best = int(np.argmin(dist))
                if dist[best] <= tol:
                    labels[n] = best
                    continue
            add(n, p)
            if k == buf.shape[1]:
                buf = np.hstack([buf, np.empty_like(buf)])
            buf[:, k] = p.vector
        return centers, labels
    for n, p in enumerate(points):
        for k, c in enumerate(centers):
            if metric(c, p) <= tol:
                labels[n] = k
                break
        else:
            add(n, p)
    return centers, labels


# =============================================================================
# WASSERSTEIN-1
# =============================================================================

def _transport_lp(a: np.ndarray, b: np.ndarray, cost: np.ndarray) -> float:
    """min <C, P> subject to P 1 = a, P^T 1 = b, P >= 0 (HiGHS)."""
    n, m = cost.shape
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    a_eq = csc_matrix((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m))
    b_eq = np.concatenate([a, b])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise NumericError(f"transport LP failed: {res.message}")
    return float(res.fun)


def wasserstein1(m1: EmpiricalMeasure, m2: EmpiricalMeasure, max_support: int = MAX_SUPPORT) -> float:
    """Exact W1 with the ground metric of m1."""
    if len(m1) > max_support or len(m2) > max_support:
        raise SizeError(f"supports of {len(m1)} and {len(m2)} atoms exceed {max_support}; subsample first")
    cost = cost_matrix(m1.points, m2.points, m1.metric)
    if len(m1) == len(m2) and m1.is_uniform and m2.is_uniform:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].mean())
    return max(0.0, _transport_lp(m1.weights, m2.weights, cost))


# =============================================================================
# CESARO CONVERGENCE OF THE DARK CHAIN
# =============================================================================

def cesaro_convergence_curve(e: KrausEnsemble, atlas: DarkAtlas, chi0: EmpiricalDarkMeasure,
                             m: int, n_max: int, samples: int = 1000, seed: int = 0,
                             chi_ref: Optional[EmpiricalDarkMeasure] = None) -> list:
    """W1 between period-averaged iterates (1/m) sum_r chi0 K^{mn+r} and the invariant measure.

    Iterates are estimated from `samples` independent dark chains started from
    chi0; the pooled states at times mn, ..., mn+m-1 form the n-th measure.
    The reference defaults to the exact stationary measure over the atlas.
    """
    if m < 1:
        raise DomainError(f"period must be positive, got {m}")
    atoms = list(atlas.representatives)
    for q in chi0.atoms:
        if find_atom(atoms, q, atlas.dedup_tol) is None:
            raise DomainError("chi0 is not supported on the atlas")
    chi_ref = chi_ref if chi_ref is not None else stationary_dark_measure(e, atoms, atlas.dedup_tol)
    ref = EmpiricalMeasure.from_dark_measure(chi_ref)

    rng = make_rng(seed)
    n_steps = m * (n_max + 1)
    visits = np.zeros((n_steps, len(atoms)))
    for _ in range(samples):
        current = find_atom(atoms, chi0.atoms[chi0.sample(rng)], atlas.dedup_tol)
        for t in range(n_steps):
            visits[t, current] += 1
            _, image = step_dark_chain(e, atoms[current], rng)
            idx = find_atom(atoms, image, atlas.dedup_tol)
            if idx is None:
                atoms.append(image)
                visits = np.hstack([visits, np.zeros((n_steps, 1))])
                idx = len(atoms) - 1
            current = idx

    curve = []
    for n in range(n_max + 1):
        pooled = visits[m * n:m * (n + 1)].sum(axis=0)
        keep = pooled > 0
        est = EmpiricalMeasure([a for a, k in zip(atoms, keep) if k], pooled[keep] / pooled.sum(), gap_distance)
        curve.append({"n": n, "w1": wasserstein1(est, ref)})
    logger.info("cesaro curve: %d chains, period %d, final W1 %.3e", samples, m, curve[-1]["w1"])
    return curve


# =============================================================================
# BLOCH EXPORT AND FITS
# =============================================================================

def bloch_coords(x: Ray) -> tuple:
    """(tr pi sigma_x, tr pi sigma_y, tr pi sigma_z) for a ray of C^2."""
    if x.dim != 2:
        raise DimensionError(f"Bloch coordinates need a ray of C^2, got dimension {x.dim}")
    a, b = x.vector
    ab = np.conj(a) * b
    return (float(2 * ab.real), float(2 * ab.imag), float(abs(a) ** 2 - abs(b) ** 2))


def bloch_rows(points: Sequence[Ray], weights: Sequence[float], frames: Sequence[tuple]) -> list:
    """Bloch export of rays of C^d living in dark planes.

    `frames` is a list of (Subspace, isometry C^2 -> Subspace); each point is
    pulled back through the frame of the plane it is closest to, whose index
    is reported as sphere_index.
    """
    rows = []
    for x, w in zip(points, weights):
        overlaps = [np.linalg.norm(dagger(q.basis) @ x.vector) for q, _ in frames]
        k = int(np.argmax(overlaps))
        j = frames[k][1]
        if j.shape[1] != 2:
            raise DimensionError(f"Bloch export needs planes (r_m = 2), got r_m = {j.shape[1]}")
        bx, by, bz = bloch_coords(Ray(dagger(j) @ x.vector))
        rows.append({"bx": bx, "by": by, "bz": bz, "weight": float(w), "sphere_index": k})
    return rows


def fit_log_slope(ns: Sequence[float], values: Sequence[float], floor: float = 1e-300) -> dict:
    """Least-squares line through (n, log value)."""
    y = np.log(np.maximum(np.asarray(values, dtype=np.float64), floor))
    fit = linregress(np.asarray(ns, dtype=np.float64), y)
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)}


def fit_line(ns: Sequence[float], ys: Sequence[float]) -> dict:
    """Least-squares line through (n, y) for values that are already logarithms."""
    fit = linregress(np.asarray(ns, dtype=np.float64), np.asarray(ys, dtype=np.float64))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept), "r_squared": float(fit.rvalue ** 2)}
