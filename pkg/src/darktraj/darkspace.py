"""
Dark subspaces.

A subspace D of dimension r is dark when every finite product w of Kraus
matrices satisfies pi_D w* w pi_D = (tr(pi_D w* w) / r) pi_D. For a finite
ensemble the condition only has to be checked on a basis of the linear span of
{w* w}, which stabilises after at most d^2 rounds.

This module certifies darkness, discovers maximal dark subspaces from the
M_n process, runs the Markov chain K on tracked dark subspaces and estimates
its invariant measure, and computes the decay sequence s(n).
"""

import logging
from dataclasses import dataclass, field
from itertools import product
from typing import Optional, Sequence

import networkx as nx
import numpy as np
from scipy import linalg as sla

from .channel import KrausEnsemble, period as channel_period
from .errors import DiscoveryError, DomainError, NumericError, RankError, SizeError
from .linalg import Subspace, dagger, gap_distance, make_rng, spawn_seeds
from .trajectory import (
    RANK_TOL,
    as_rng,
    chaotic_trajectory,
    estimate_dark,
    m_sample,
    sample_index,
    word_product,
)

logger = logging.getLogger(__name__)


DARK_TOL = 1e-9             # certification threshold on the compression residual
DEDUP_TOL = 1e-6            # gap below which two subspaces are the same atom
SPAN_TOL = 1e-10            # relative rank tolerance of the span iteration
MIN_WEIGHT = 1e-14
MAX_ATOMS = 512
ATLAS_CAP = 64
EXHAUSTIVE_LIMIT = 10 ** 6


# =============================================================================
# TYPES
# =============================================================================

@dataclass(eq=False)
class DarkCertificate:
    subspace: Subspace
    residual: float
    words_tested: int
    span_dimension_history: list = field(default_factory=list)
    tol: float = DARK_TOL

    @property
    def certified(self) -> bool:
        return self.residual <= self.tol

    def to_dict(self) -> dict:
        return {
            "dim": self.subspace.dim,
            "residual": self.residual,
            "certified": self.certified,
            "words_tested": self.words_tested,
            "span_dimension_history": list(self.span_dimension_history),
        }


@dataclass(eq=False)
class DarkAtlas:
    """Certified maximal dark subspaces found so far; a support sketch, not a census."""
    r_m: int
    representatives: list
    discovery_seeds: list = field(default_factory=list)
    dedup_tol: float = DEDUP_TOL

    def index_of(self, q: Subspace) -> Optional[int]:
        return find_atom(self.representatives, q, self.dedup_tol)

    def __len__(self):
        return len(self.representatives)

    def to_dict(self) -> dict:
        return {
            "r_m": self.r_m,
            "discovery_seeds": [int(s) for s in self.discovery_seeds],
            "representatives": [q.to_list() for q in self.representatives],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DarkAtlas":
        reps = [Subspace(_complex_array(b)) for b in doc["representatives"]]
        return cls(int(doc["r_m"]), reps, list(doc.get("discovery_seeds", [])))


@dataclass(eq=False)
class EmpiricalDarkMeasure:
    """Finite measure on tracked dark subspaces."""
    atoms: list
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.atoms),):
            raise DomainError(f"{w.shape[0]} weights for {len(self.atoms)} atoms")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise DomainError(f"dark measure weights must be non-negative and sum to 1 (sum {w.sum()!r})")
        self.weights = w

    @classmethod
    def from_counts(cls, atoms: list, counts) -> "EmpiricalDarkMeasure":
        c = np.asarray(counts, dtype=np.float64)
        keep = c > 0
        atoms = [a for a, k in zip(atoms, keep) if k]
        c = c[keep]
        return cls(atoms, c / c.sum())

    @classmethod
    def dirac(cls, q: Subspace) -> "EmpiricalDarkMeasure":
        return cls([q], np.ones(1))

    @property
    def r_m(self) -> int:
        return self.atoms[0].dim

    def sample(self, rng: np.random.Generator) -> int:
        return sample_index(self.weights, rng)

    def weight_of(self, q: Subspace, tol: float = DEDUP_TOL) -> float:
        idx = find_atom(self.atoms, q, tol)
        return 0.0 if idx is None else float(self.weights[idx])

    def to_dict(self) -> dict:
        return {
            "atoms": [{"weight": float(w), "basis": q.to_list()} for q, w in zip(self.atoms, self.weights)],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EmpiricalDarkMeasure":
        atoms = [Subspace(_complex_array(a["basis"])) for a in doc["atoms"]]
        return cls(atoms, np.array([float(a["weight"]) for a in doc["atoms"]]))


def _complex_array(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def find_atom(atoms: Sequence[Subspace], q: Subspace, tol: float = DEDUP_TOL) -> Optional[int]:
    """Index of the first atom within gap tol of q, or None."""
    for k, a in enumerate(atoms):
        if a.dim == q.dim and gap_distance(a, q) <= tol:
            return k
    return None


# =============================================================================
# CERTIFICATION
# =============================================================================

def _hermitian_to_real(a: np.ndarray) -> np.ndarray:
    return np.concatenate([a.real.ravel(), a.imag.ravel()])


def _real_to_hermitian(x: np.ndarray, d: int) -> np.ndarray:
    n = d * d
    a = (x[:n] + 1j * x[n:]).reshape(d, d)
    return (a + dagger(a)) / 2


def _orthonormalize(mats: list, d: int, tol: float) -> list:
    rows = np.array([_hermitian_to_real(a) for a in mats])
    _, s, vh = np.linalg.svd(rows, full_matrices=False)
    if s[0] == 0:
        return []
    rank = int(np.sum(s > tol * s[0]))
    return [_real_to_hermitian(vh[k], d) for k in range(rank)]


def span_iteration(e: KrausEnsemble, tol: float = SPAN_TOL) -> tuple:
    """(orthonormal Hermitian basis of span{w* w}, dimension after every round)."""
    d = e.dim
    basis = _orthonormalize([dagger(v) @ v for v in e.matrices], d, tol)
    history = [len(basis)]
    for _ in range(d * d):
        images = [dagger(v) @ a @ v for a in basis for v in e.matrices]
        grown = _orthonormalize(basis + images, d, tol)
        history.append(len(grown))
        if len(grown) == len(basis):
            break
        basis = grown
    logger.debug("stabilized span of %s: dimensions %s", e.name or "<unnamed>", history)
    return basis, history


def stabilized_span(e: KrausEnsemble, tol: float = SPAN_TOL) -> list:
    """Orthonormal (Frobenius) Hermitian basis of span{w* w : w a finite word}."""
    return span_iteration(e, tol)[0]


def compression_residual(q: Subspace, a: np.ndarray) -> float:
    """||pi_D a pi_D - (tr(pi_D a) / r) pi_D|| in operator norm."""
    c = dagger(q.basis) @ a @ q.basis
    r = q.dim
    return float(np.linalg.norm(c - np.trace(c) / r * np.eye(r), 2))


def is_dark(q: Subspace, e: KrausEnsemble, span: Optional[tuple] = None,
            tol: float = DARK_TOL) -> DarkCertificate:
    """Certify q against every element of the stabilized span.

    The residual is the norm of A -> pi_D A pi_D - (tr(pi_D A)/r) pi_D over unit
    (Frobenius) elements of the span, so it does not depend on the basis chosen.
    """
    if q.ambient_dim != e.dim:
        raise DomainError(f"subspace lives in C^{q.ambient_dim}, ensemble in C^{e.dim}")
    basis, history = span if span is not None else span_iteration(e)
    r = q.dim
    cols = []
    for a in basis:
        c = dagger(q.basis) @ a @ q.basis
        c = c - np.trace(c) / r * np.eye(r)
        cols.append(np.concatenate([c.real.ravel(), c.imag.ravel()]))
    residual = float(sla.svdvals(np.column_stack(cols))[0]) if cols else 0.0
    return DarkCertificate(q, residual, len(basis), list(history), tol)


def word_residual(q: Subspace, w: np.ndarray) -> float:
    """Word-level darkness check for one product w."""
    return compression_residual(q, dagger(w) @ w)


# =============================================================================
# DISCOVERY
# =============================================================================

def _probe(e: KrausEnsemble, chain_len: int, seed: int, span: tuple, tol: float,
           rank_tol: float = RANK_TOL):
    """Largest certified candidate from one chaotic-start trajectory, or None."""
    ts = chaotic_trajectory(e, chain_len, seed, stride=max(chain_len, 1))[-1]
    r_hat = m_sample(ts, rank_tol).numerical_rank
    for r in range(r_hat, 0, -1):
        try:
            _, d_hat = estimate_dark(ts, r, rank_tol)
        except RankError:
            continue
        cert = is_dark(d_hat, e, span, tol)
        if cert.certified:
            logger.debug("probe %d: r_hat=%d, certified r=%d (residual %.2e)", seed, r_hat, r, cert.residual)
            return cert
    return None


def discover_maximal_dark(e: KrausEnsemble, n_probes: int = 16, chain_len: int = 400,
                          seed: int = 0, tol: float = DARK_TOL, dedup_tol: float = DEDUP_TOL,
                          close: bool = True, cap: int = ATLAS_CAP,
                          rank_tol: float = RANK_TOL) -> DarkAtlas:
    """Run probes, keep certified candidates of the largest dimension, deduplicate.

    Probe seeds are spawned from `seed`; the merge is sequential in probe order.
    With `close`, the atlas is then closed under the dark chain.
    """
    if n_probes < 1:
        raise DomainError(f"n_probes must be positive, got {n_probes}")
    span = span_iteration(e)
    seeds = spawn_seeds(seed, n_probes)
    found = [(s, c) for s in seeds if (c := _probe(e, chain_len, s, span, tol, rank_tol)) is not None]
    if not found:
        raise DiscoveryError(
            f"no certified dark subspace after {n_probes} probes of length {chain_len}; "
            "try a longer chain_len"
        )
    r_m = max(c.subspace.dim for _, c in found)
    reps: list = []
    used: list = []
    for s, c in found:
        if c.subspace.dim != r_m:
            continue
        if find_atom(reps, c.subspace, dedup_tol) is None:
            reps.append(c.subspace)
            used.append(s)
    atlas = DarkAtlas(r_m, reps, used, dedup_tol)
    logger.info("discovery: r_m=%d, %d representatives from %d probes", r_m, len(reps), n_probes)
    if close:
        atlas = close_atlas(e, atlas, span=span, tol=tol, cap=cap)
    return atlas


def image_subspace(v: np.ndarray, q: Subspace) -> Subspace:
    """Orthonormalised v(q), required to keep the dimension of q."""
    image = Subspace.span(v @ q.basis)
    if image.dim != q.dim:
        raise NumericError(f"image of a dark subspace dropped from dimension {q.dim} to {image.dim}")
    return image


def kernel_weights(e: KrausEnsemble, q: Subspace) -> np.ndarray:
    """p_i tr(v_i pi_D v_i*) / r for every item."""
    norms = np.sum(np.abs(e.matrices @ q.basis) ** 2, axis=(1, 2))
    return e.weights * norms / q.dim


def close_atlas(e: KrausEnsemble, atlas: DarkAtlas, span: Optional[tuple] = None,
                tol: float = DARK_TOL, cap: int = ATLAS_CAP) -> DarkAtlas:
    """Add every image v_i D of tracked atoms until closed or `cap` atoms are held."""
    span = span if span is not None else span_iteration(e)
    reps = list(atlas.representatives)
    k = 0
    while k < len(reps):
        q = reps[k]
        for i, w in enumerate(kernel_weights(e, q)):
            if w < MIN_WEIGHT:
                continue
            image = image_subspace(e.matrices[i], q)
            if find_atom(reps, image, atlas.dedup_tol) is not None:
                continue
            if len(reps) >= cap:
                logger.warning("atlas closure stopped at %d atoms; the atlas is a partial sketch", cap)
                return DarkAtlas(atlas.r_m, reps, atlas.discovery_seeds, atlas.dedup_tol)
            cert = is_dark(image, e, span, tol)
            if not cert.certified:
                logger.warning("image of a dark subspace failed certification (residual %.2e)", cert.residual)
                continue
            reps.append(image)
        k += 1
    if len(reps) > len(atlas.representatives):
        logger.info("atlas closed under the dark chain: %d -> %d atoms", len(atlas.representatives), len(reps))
    return DarkAtlas(atlas.r_m, reps, atlas.discovery_seeds, atlas.dedup_tol)


# =============================================================================
# THE DARK CHAIN K
# =============================================================================

def step_dark_chain(e: KrausEnsemble, q: Subspace, rng) -> tuple:
    """(index, v_i D) with index drawn from p_i tr(v_i pi_D v_i*) / r."""
    rng = as_rng(rng)
    i = sample_index(kernel_weights(e, q), rng)
    return i, image_subspace(e.matrices[i], q)


def dark_transition_matrix(e: KrausEnsemble, atoms: Sequence[Subspace],
                           dedup_tol: float = DEDUP_TOL) -> np.ndarray:
    """Exact K restricted to tracked atoms; mass leaving the atoms is dropped from the row."""
    k = len(atoms)
    t = np.zeros((k, k))
    for a, q in enumerate(atoms):
        for i, w in enumerate(kernel_weights(e, q)):
            if w < MIN_WEIGHT:
                continue
            b = find_atom(atoms, image_subspace(e.matrices[i], q), dedup_tol)
            if b is not None:
                t[a, b] += w
    leak = 1 - t.sum(axis=1)
    if np.any(leak > 1e-9):
        logger.warning("dark chain leaves the tracked atoms (max row deficit %.3e)", leak.max())
    return t


def stationary_dark_measure(e: KrausEnsemble, atoms: Sequence[Subspace],
                            dedup_tol: float = DEDUP_TOL) -> EmpiricalDarkMeasure:
    """Invariant measure of the exact transition matrix over the tracked atoms."""
    t = dark_transition_matrix(e, atoms, dedup_tol)
    k = len(atoms)
    a = np.vstack([t.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0, None)
    return EmpiricalDarkMeasure(list(atoms), pi / pi.sum())


def dark_chain_graph(e: KrausEnsemble, atoms: Sequence[Subspace],
                     dedup_tol: float = DEDUP_TOL) -> nx.DiGraph:
    """Transition graph of K over tracked atoms.

    Edge attributes: `weight` (transition probability) and `kraus` (the
    smallest item index realising the transition).
    """
    g = nx.DiGraph()
    g.add_nodes_from(range(len(atoms)))
    for a, q in enumerate(atoms):
        for i, w in enumerate(kernel_weights(e, q)):
            if w < MIN_WEIGHT:
                continue
            b = find_atom(atoms, image_subspace(e.matrices[i], q), dedup_tol)
            if b is None:
                continue
            if g.has_edge(a, b):
                g[a][b]["weight"] += float(w)
            else:
                g.add_edge(a, b, weight=float(w), kraus=i)
    return g


def is_aperiodic_chain(g: nx.DiGraph) -> bool:
    return nx.is_strongly_connected(g) and nx.is_aperiodic(g)


def estimate_chi_inv(e: KrausEnsemble, atlas: DarkAtlas, n_burn: int = 1000,
                     n_keep: int = 10_000, seed: int = 0, period: Optional[int] = None,
                     max_atoms: int = MAX_ATOMS) -> EmpiricalDarkMeasure:
    """Occupation measure of the dark chain after burn-in.

    States are snapped to stored atoms (gap <= dedup tolerance) so the chain
    does not drift; n_keep is truncated to a multiple of the period so every
    phase of the cycle is averaged equally.
    """
    if not atlas.representatives:
        raise DomainError("atlas is empty")
    m = channel_period(e) if period is None else period
    n_keep = max(m, (n_keep // m) * m)
    rng = make_rng(seed)
    atoms = list(atlas.representatives)
    counts = [0] * len(atoms)
    current = 0
    for n in range(n_burn + n_keep):
        _, image = step_dark_chain(e, atoms[current], rng)
        idx = find_atom(atoms, image, atlas.dedup_tol)
        if idx is None:
            if len(atoms) >= max_atoms:
                raise SizeError(f"dark chain visited more than {max_atoms} atoms; "
                                "its invariant measure is not finitely supported on this scale")
            atoms.append(image)
            counts.append(0)
            idx = len(atoms) - 1
        current = idx
        if n >= n_burn:
            counts[idx] += 1
    chi = EmpiricalDarkMeasure.from_counts(atoms, counts)
    logger.info("chi_inv estimate: %d atoms from %d kept steps (period %d)", len(chi.atoms), n_keep, m)
    return chi


# =============================================================================
# DECAY SEQUENCE s(n)
# =============================================================================

def enumerate_words(k: int, n: int):
    """All words of length n over k letters, in lexicographic order."""
    return product(range(k), repeat=n)


def _suffix_block(e: KrausEnsemble, m: int) -> tuple:
    words = list(enumerate_words(e.size, m))
    mats = np.stack([word_product(e, w) for w in words])
    weights = np.array([np.prod(e.weights[list(w)]) if w else 1.0 for w in words])
    return mats, weights


def _wedge_stat(mats: np.ndarray, p: int) -> np.ndarray:
    s = np.linalg.svd(mats, compute_uv=False)
    # singular values under the matrix_rank threshold are exact zeros
    floor = s[..., :1] * max(mats.shape[-2:]) * np.finfo(np.float64).eps
    s = np.where(s > floor, s, 0.0)
    return np.prod(s[..., :p], axis=-1) ** (2.0 / p)


def s_of_n(e: KrausEnsemble, n: int, mode: str = "exhaustive", r_m: int = 1,
           samples: int = 2000, seed: int = 0, max_words: int = EXHAUSTIVE_LIMIT) -> float:
    """s(n) = sum_w p_w ||^{r_m+1} w||^{2/(r_m+1)} over words of length n.

    monte_carlo mode uses s(n) = d E^ch[(prod_{i<=r_m+1} a_i(W_n / sqrt(tr W_n* W_n)))^{2/(r_m+1)}]
    under the chaotic-state law.
    """
    p = r_m + 1
    if not 1 <= r_m < e.dim:
        raise DomainError(f"s(n) needs 1 <= r_m < d, got r_m={r_m}, d={e.dim}")
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    if n == 0:
        return 1.0
    if mode == "exhaustive":
        if e.size ** n > max_words:
            raise SizeError(f"{e.size}^{n} words exceed the exhaustive limit {max_words}; use monte_carlo")
        m = n
        while e.size ** m > 4096:
            m -= 1
        suffix, suffix_w = _suffix_block(e, m)
        total = 0.0
        for prefix in enumerate_words(e.size, n - m):
            pw = np.prod(e.weights[list(prefix)]) if prefix else 1.0
            batch = suffix @ word_product(e, prefix)
            total += pw * float(np.dot(suffix_w, _wedge_stat(batch, p)))
        return total
    if mode == "monte_carlo":
        rng = make_rng(seed)
        stats = np.empty(samples)
        for j in range(samples):
            w = chaotic_trajectory(e, n, rng, stride=n)[-1].W
            stats[j] = _wedge_stat((w / np.linalg.norm(w))[np.newaxis], p)[0]
        return float(e.dim * stats.mean())
    raise DomainError(f"unknown s(n) mode {mode!r}; expected 'exhaustive' or 'monte_carlo'")


def s_curve(e: KrausEnsemble, n_max: int, r_m: int, mode: str = "exhaustive",
            samples: int = 2000, seed: int = 0) -> list:
    return [{"n": n, "s_n": s_of_n(e, n, mode, r_m, samples, seed)} for n in range(n_max + 1)]
