"""
Seeded quantum trajectories.

A trajectory applies, at every step, the Kraus matrix v_i chosen with
probability p_i ||v_i x||^2 (rays) or p_i tr(v_i rho v_i*) (states). Alongside the
state it tracks the running product W_n = V_n ... V_1, rescaled to stay inside
double range, from which the M_n process, the polar factors U_n and the
estimators E_hat_n, D_hat_n are read off.
"""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import linalg as sla

from .channel import KrausEnsemble
from .errors import DimensionError, DomainError, NumericError, PreconditionError, RankError
from .linalg import (
    DensityMatrix,
    Ray,
    Subspace,
    dagger,
    make_rng,
    numerical_rank,
    polar_decompose,
    random_ray,
)

logger = logging.getLogger(__name__)


# Rescale W whenever its norm leaves [SCALE_LOW, SCALE_HIGH]
SCALE_LOW = 1e-150
SCALE_HIGH = 1e150
RANK_TOL = 1e-7             # relative to the top eigenvalue of M_n
MIN_TOTAL_WEIGHT = 1e-14

State = Union[Ray, DensityMatrix]


def as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return make_rng(seed_or_rng)


@dataclass(eq=False)
class TrajectoryState:
    """One point of a trajectory: the state after `step` steps and the rescaled W."""
    step: int
    state: State
    W: np.ndarray
    log_scale: float = 0.0
    history: list = field(default_factory=list, repr=False)

    @property
    def chosen_indices(self) -> list:
        """Kraus indices applied so far, in application order."""
        return self.history[:self.step]

    @property
    def is_ray(self) -> bool:
        return isinstance(self.state, Ray)

    def density(self) -> DensityMatrix:
        return DensityMatrix.pure(self.state) if self.is_ray else self.state


@dataclass(eq=False)
class MProcessSample:
    n: int
    M: DensityMatrix
    U: np.ndarray
    numerical_rank: int
    log_norm: float = 0.0       # log sqrt(tr W_n* W_n) including the accumulated rescaling

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "numerical_rank": self.numerical_rank,
            "log_norm": self.log_norm,
            "spectrum": [float(x) for x in self.M.spectrum()],
        }


# =============================================================================
# ONE STEP
# =============================================================================

def outcome_probabilities_ray(e: KrausEnsemble, x: Ray) -> np.ndarray:
    """p_i ||v_i x||^2 for the unit representative x."""
    if x.dim != e.dim:
        raise DimensionError(f"ray of dimension {x.dim} for an ensemble of dimension {e.dim}")
    images = e.matrices @ x.vector
    return e.weights * np.sum(np.abs(images) ** 2, axis=1)


def outcome_probabilities_density(e: KrausEnsemble, rho: DensityMatrix) -> np.ndarray:
    """p_i tr(v_i rho v_i*)."""
    if rho.dim != e.dim:
        raise DimensionError(f"state of dimension {rho.dim} for an ensemble of dimension {e.dim}")
    traces = np.einsum("iab,bc,iac->i", e.matrices, rho.matrix, e.matrices.conj()).real
    return e.weights * traces


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over cumulative weights in item order."""
    cum = np.cumsum(probs)
    total = cum[-1]
    if not total >= MIN_TOTAL_WEIGHT:
        raise NumericError(f"outcome weights sum to {total!r}; the ensemble input is corrupt")
    idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
    return min(idx, len(probs) - 1)


def step_ray(e: KrausEnsemble, x: Ray, rng) -> tuple:
    """One step of the ray chain: (index, normalised v_i x)."""
    rng = as_rng(rng)
    i = sample_index(outcome_probabilities_ray(e, x), rng)
    return i, Ray(e.matrices[i] @ x.vector)


def step_density(e: KrausEnsemble, rho: DensityMatrix, rng) -> tuple:
    """One step of the state chain: (index, v_i rho v_i* / tr)."""
    rng = as_rng(rng)
    i = sample_index(outcome_probabilities_density(e, rho), rng)
    v = e.matrices[i]
    return i, DensityMatrix.from_operator(v @ rho.matrix @ dagger(v))


# =============================================================================
# TRAJECTORIES
# =============================================================================

def _rescale(w: np.ndarray, log_scale: float) -> tuple:
    norm = np.linalg.norm(w)
    if norm == 0 or not np.isfinite(norm):
        raise NumericError(f"running product has norm {norm!r}")
    if norm < SCALE_LOW or norm > SCALE_HIGH:
        return w / norm, log_scale + float(np.log(norm))
    return w, log_scale


def run_trajectory(e: KrausEnsemble, initial: State, n_steps: int, seed=None,
                   stride: int = 1) -> list:
    """Simulate n_steps steps from `initial`.

    States are kept every `stride` steps; the initial and final states are
    always kept. Two runs with the same seed produce the same index sequence.
    """
    if n_steps < 0:
        raise DomainError(f"n_steps must be non-negative, got {n_steps}")
    if stride < 1:
        raise DomainError(f"stride must be positive, got {stride}")
    if initial.dim != e.dim:
        raise DimensionError(f"initial state of dimension {initial.dim}, ensemble dimension {e.dim}")
    rng = as_rng(seed)
    step = step_ray if isinstance(initial, Ray) else step_density

    history: list = []
    w = np.eye(e.dim, dtype=np.complex128)
    log_scale = 0.0
    state = initial
    out = [TrajectoryState(0, state, w.copy(), log_scale, history)]
    for n in range(1, n_steps + 1):
        i, state = step(e, state, rng)
        history.append(i)
        w, log_scale = _rescale(e.matrices[i] @ w, log_scale)
        if n % stride == 0 or n == n_steps:
            out.append(TrajectoryState(n, state, w.copy(), log_scale, history))
    return out


def chaotic_trajectory(e: KrausEnsemble, n_steps: int, seed=None, stride: int = 1) -> list:
    """Trajectory from Id/d: its word law is the chaotic-state law p_w tr(w* w)/d."""
    return run_trajectory(e, DensityMatrix.maximally_mixed(e.dim), n_steps, seed, stride)


def word_product(e: KrausEnsemble, word: Sequence[int]) -> np.ndarray:
    """v_{i_n} ... v_{i_1} for word = (i_1, ..., i_n); Id for the empty word."""
    w = np.eye(e.dim, dtype=np.complex128)
    for i in word:
        w = e.matrices[i] @ w
    return w


def word_weight(e: KrausEnsemble, word: Sequence[int]) -> float:
    return float(np.prod(e.weights[list(word)])) if len(word) else 1.0


# =============================================================================
# M PROCESS AND ESTIMATORS
# =============================================================================

def m_sample(ts: TrajectoryState, rank_tol: float = RANK_TOL) -> MProcessSample:
    w = ts.W
    gram = dagger(w) @ w
    tr = float(np.trace(gram).real)
    if not tr > 0 or not np.isfinite(tr):
        raise NumericError(f"tr(W* W) = {tr!r} at step {ts.step} after rescaling")
    m = DensityMatrix.from_operator(gram / tr)
    u, _ = polar_decompose(w)
    return MProcessSample(
        n=ts.step,
        M=m,
        U=u,
        numerical_rank=numerical_rank(m.matrix, rank_tol),
        log_norm=ts.log_scale + 0.5 * float(np.log(tr)),
    )


def m_process(traj: Sequence[TrajectoryState], rank_tol: float = RANK_TOL) -> list:
    """M_n = W_n* W_n / tr(W_n* W_n) together with the polar factor U_n."""
    return [m_sample(ts, rank_tol) for ts in traj]


def estimate_dark(ts: TrajectoryState, r_m: int, rank_tol: float = RANK_TOL) -> tuple:
    """Maximum-likelihood estimators (E_hat_n, D_hat_n = W_n E_hat_n)."""
    d = ts.W.shape[0]
    if not 1 <= r_m <= d:
        raise DomainError(f"r_m={r_m} out of range for dimension {d}")
    x, s, yh = sla.svd(ts.W)
    if s[0] == 0 or s[r_m - 1] ** 2 <= rank_tol * s[0] ** 2:
        raise RankError(
            f"W_{ts.step} has numerical rank below r_m={r_m} "
            f"(singular value ratio {s[r_m - 1] / s[0] if s[0] else 0.0:.3e})"
        )
    e_hat = Subspace(dagger(yh)[:, :r_m])
    # W Y_r = X_r S_r, so the orthonormalised image is X_r
    d_hat = Subspace(x[:, :r_m])
    return e_hat, d_hat


def darkness_gap(state: State, dark_list: Sequence[Subspace]) -> float:
    """min over D of 1 - tr(pi_D rho), clamped to [0, 1]."""
    if not dark_list:
        raise PreconditionError("darkness gap needs at least one dark subspace")
    if isinstance(state, Ray):
        best = max(np.linalg.norm(dagger(q.basis) @ state.vector) ** 2 for q in dark_list)
    else:
        best = max(np.trace(q.projector @ state.matrix).real for q in dark_list)
    return float(min(1.0, max(0.0, 1.0 - best)))


def darkness_gap_curve(e: KrausEnsemble, dark_list: Sequence[Subspace], n_max: int,
                       seeds: Sequence[int], floor: float = 1e-300) -> list:
    """Mean darkness gap and mean log gap at every step n = 0..n_max, over seeds.

    Every seed starts from its own uniformly random ray.
    """
    gaps = np.empty((len(seeds), n_max + 1))
    for k, seed in enumerate(seeds):
        rng = make_rng(seed)
        x0 = random_ray(e.dim, rng)
        traj = run_trajectory(e, x0, n_max, rng)
        gaps[k] = [darkness_gap(ts.state, dark_list) for ts in traj]
    logs = np.log(np.maximum(gaps, floor))
    logger.info("darkness gap curve: %d seeds, n_max=%d, final mean gap %.3e",
                len(seeds), n_max, gaps[:, -1].mean())
    return [
        {"n": n, "mean_darkness_gap": float(gaps[:, n].mean()), "mean_log_gap": float(logs[:, n].mean())}
        for n in range(n_max + 1)
    ]
