"""
Kraus ensembles and the quantum channel they define.

An ensemble is a finite weighted family {(p_i, v_i)} with sum_i p_i v_i* v_i = Id.
The channel phi(X) = sum_i p_i v_i X v_i* is represented as a d^2 x d^2 matrix
acting on row-major vectorisations; its spectrum gives the fixed point,
irreducibility verdict and period.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    NumericError,
    PreconditionError,
    StochasticityError,
)
from .linalg import DensityMatrix, as_matrix, dagger, hermitian_part

logger = logging.getLogger(__name__)


# Tolerances
STOCHASTICITY_TOL = 1e-10
EIGEN_ONE_TOL = 1e-8        # eigenvalues this close to 1 count toward the fixed-point multiplicity
PERIPHERAL_TOL = 1e-8       # |lambda| >= 1 - PERIPHERAL_TOL is peripheral
FULL_RANK_TOL = 1e-8        # smallest eigenvalue of rho_inf above this: full rank
AMBIGUOUS_FLOOR = 1e-10     # [AMBIGUOUS_FLOOR, FULL_RANK_TOL] is flagged, not decided

IRREDUCIBLE = "irreducible"
REDUCIBLE = "reducible"
AMBIGUOUS = "ambiguous"


@dataclass(eq=False)
class KrausEnsemble:
    """Finitely supported measure mu = sum_i p_i delta_{v_i} on d x d matrices."""
    weights: np.ndarray
    matrices: np.ndarray
    name: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        mats = np.asarray(self.matrices, dtype=np.complex128)
        if mats.ndim == 2:
            mats = mats[np.newaxis]
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] == 0:
            raise DimensionError(f"Kraus matrices must have shape (k, d, d), got {mats.shape}")
        if w.shape[0] != mats.shape[0]:
            raise DimensionError(f"{w.shape[0]} weights for {mats.shape[0]} Kraus matrices")
        if not np.all(np.isfinite(w)) or not np.all(np.isfinite(mats)):
            raise NumericError("Kraus ensemble has non-finite entries")
        if np.any(w <= 0):
            raise DomainError("Kraus weights must be strictly positive")
        self.weights = w
        self.matrices = mats

    @classmethod
    def from_items(cls, items, name: str = "") -> "KrausEnsemble":
        """Build from an iterable of (weight, matrix) pairs."""
        items = list(items)
        if not items:
            raise DimensionError("Kraus ensemble needs at least one item")
        return cls(
            weights=np.array([p for p, _ in items], dtype=np.float64),
            matrices=np.stack([as_matrix(v, "Kraus matrix") for _, v in items]),
            name=name,
        )

    @classmethod
    def single(cls, u, name: str = "single") -> "KrausEnsemble":
        return cls.from_items([(1.0, u)], name=name)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @property
    def size(self) -> int:
        return self.matrices.shape[0]

    def __len__(self):
        return self.size

    def items(self):
        return list(zip(self.weights.tolist(), self.matrices))

    def weighted_gram(self) -> np.ndarray:
        """sum_i p_i v_i* v_i."""
        return np.einsum("i,iba,ibc->ac", self.weights, self.matrices.conj(), self.matrices)

    def adjoints(self) -> np.ndarray:
        return dagger(self.matrices)


@dataclass
class ChannelReport:
    fixed_point: DensityMatrix
    fixed_point_multiplicity: int
    is_irreducible: bool
    period: Optional[int]
    spectral_gap: float
    verdict: str = IRREDUCIBLE
    min_eigenvalue: float = 0.0
    stochasticity_residual: float = 0.0
    peripheral: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "is_irreducible": self.is_irreducible,
            "fixed_point_multiplicity": self.fixed_point_multiplicity,
            "period": self.period,
            "spectral_gap": self.spectral_gap,
            "min_eigenvalue": self.min_eigenvalue,
            "stochasticity_residual": self.stochasticity_residual,
            "peripheral_eigenvalues": [[float(z.real), float(z.imag)] for z in self.peripheral],
            "fixed_point": [[[float(z.real), float(z.imag)] for z in row]
                            for row in self.fixed_point.matrix],
        }


# =============================================================================
# STOCHASTICITY AND THE CHANNEL
# =============================================================================

def stochasticity_residual(e: KrausEnsemble) -> float:
    return float(np.linalg.norm(e.weighted_gram() - np.eye(e.dim), 2))


def validate_ensemble(e: KrausEnsemble, tol: float = STOCHASTICITY_TOL) -> float:
    """Check sum_i p_i v_i* v_i = Id. Returns the residual, raises StochasticityError."""
    residual = stochasticity_residual(e)
    if residual > tol:
        raise StochasticityError(residual, tol)
    logger.debug("ensemble %s: stochasticity residual %.3e", e.name or "<unnamed>", residual)
    return residual


def apply_channel(e: KrausEnsemble, x) -> np.ndarray:
    """phi(x) = sum_i p_i v_i x v_i*."""
    m = as_matrix(x, "channel input")
    if m.shape != (e.dim, e.dim):
        raise DimensionError(f"channel input has shape {m.shape}, ensemble dimension is {e.dim}")
    return np.einsum("i,iab,bc,idc->ad", e.weights, e.matrices, m, e.matrices.conj())


def apply_dual_channel(e: KrausEnsemble, a) -> np.ndarray:
    """phi*(a) = sum_i p_i v_i* a v_i."""
    m = as_matrix(a, "dual channel input")
    if m.shape != (e.dim, e.dim):
        raise DimensionError(f"dual channel input has shape {m.shape}, ensemble dimension is {e.dim}")
    return np.einsum("i,iba,bc,icd->ad", e.weights, e.matrices.conj(), m, e.matrices)


def superoperator(e: KrausEnsemble) -> np.ndarray:
    """Matrix of phi on row-major vec: vec(v X v*) = kron(v, conj(v)) vec(X)."""
    d = e.dim
    s = np.zeros((d * d, d * d), dtype=np.complex128)
    for p, v in e.items():
        s += p * np.kron(v, v.conj())
    return s


def _spectrum(e: KrausEnsemble):
    try:
        return sla.eig(superoperator(e), left=True, right=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"superoperator eigen-decomposition failed: {exc}") from exc


def peripheral_eigenvalues(e: KrausEnsemble, tol: float = PERIPHERAL_TOL) -> np.ndarray:
    """Superoperator eigenvalues with modulus >= 1 - tol, sorted by argument in [0, 2pi)."""
    ev = sla.eigvals(superoperator(e))
    per = ev[np.abs(ev) >= 1 - tol]
    return per[np.argsort(np.mod(np.angle(per), 2 * np.pi))]


def _fixed_point_projection(e: KrausEnsemble, left, right, ones) -> np.ndarray:
    """Spectral projection of vec(Id/d) onto the eigenvalue-1 eigenspace."""
    d = e.dim
    r = right[:, ones]
    lh = dagger(left[:, ones])
    start = (np.eye(d, dtype=np.complex128) / d).reshape(-1)
    try:
        coeffs = np.linalg.solve(lh @ r, lh @ start)
    except np.linalg.LinAlgError:
        logger.warning("eigenvalue-1 block is defective; falling back to Cesaro iteration")
        return _cesaro_fixed_point(e)
    return (r @ coeffs).reshape(d, d)


def _cesaro_fixed_point(e: KrausEnsemble, n_iter: int = 10_000) -> np.ndarray:
    rho = np.eye(e.dim, dtype=np.complex128) / e.dim
    acc = np.zeros_like(rho)
    for _ in range(n_iter):
        acc += rho
        rho = apply_channel(e, rho)
    return acc / n_iter


def fixed_point(e: KrausEnsemble, tol: float = STOCHASTICITY_TOL,
                peripheral_tol: float = PERIPHERAL_TOL) -> ChannelReport:
    """Fixed point, multiplicity, irreducibility verdict, spectral gap and period."""
    residual = validate_ensemble(e, tol)
    ev, left, right = _spectrum(e)

    ones = np.abs(ev - 1) <= EIGEN_ONE_TOL
    multiplicity = int(np.sum(ones))
    if multiplicity == 0:
        raise NumericError("superoperator has no eigenvalue at 1; ensemble is not trace preserving")

    rho = hermitian_part(_fixed_point_projection(e, left, right, ones))
    tr = np.trace(rho).real
    if tr <= 0:
        raise NumericError(f"fixed point has non-positive trace {tr!r}")
    rho = rho / tr
    spectrum, vecs = np.linalg.eigh(rho)
    min_eig = float(spectrum[0])
    if min_eig < 0:
        # roundoff on a singular fixed point
        rho = (vecs * np.clip(spectrum, 0, None)) @ dagger(vecs)
        rho = rho / np.trace(rho).real

    if multiplicity > 1 or min_eig < AMBIGUOUS_FLOOR:
        verdict = REDUCIBLE
    elif min_eig <= FULL_RANK_TOL:
        verdict = AMBIGUOUS
        logger.warning("fixed point smallest eigenvalue %.3e lies in the ambiguous band [%.0e, %.0e]",
                       min_eig, AMBIGUOUS_FLOOR, FULL_RANK_TOL)
    else:
        verdict = IRREDUCIBLE

    modulus = np.abs(ev)
    peripheral = ev[modulus >= 1 - peripheral_tol]
    peripheral = peripheral[np.argsort(np.mod(np.angle(peripheral), 2 * np.pi))]
    inner = modulus[modulus < 1 - peripheral_tol]
    gap = float(1 - inner.max()) if inner.size else 1.0

    report = ChannelReport(
        fixed_point=DensityMatrix(rho),
        fixed_point_multiplicity=multiplicity,
        is_irreducible=verdict == IRREDUCIBLE,
        period=None if verdict == REDUCIBLE else int(peripheral.size),
        spectral_gap=gap,
        verdict=verdict,
        min_eigenvalue=max(min_eig, 0.0),
        stochasticity_residual=residual,
        peripheral=list(peripheral),
    )
    logger.info("channel %s: %s, multiplicity %d, period %s, gap %.3e",
                e.name or "<unnamed>", verdict, multiplicity, report.period, gap)
    return report


def period(e: KrausEnsemble) -> int:
    """Number of peripheral eigenvalues of the superoperator (irreducible ensembles only)."""
    report = fixed_point(e)
    if report.verdict == REDUCIBLE:
        raise PreconditionError(
            f"period is only defined for irreducible ensembles (multiplicity "
            f"{report.fixed_point_multiplicity}, min eigenvalue {report.min_eigenvalue:.3e})"
        )
    m = report.period
    if not 1 <= m <= e.dim:
        raise NumericError(f"peripheral spectrum count {m} outside [1, {e.dim}]")
    return m


def commutant_dimension(e: KrausEnsemble, tol: float = 1e-9) -> int:
    """Dimension of {X : X v_i = v_i X and X v_i* = v_i* X for all i}.

    Equal to 1 exactly when the v_i have no common reducing subspace.
    """
    d = e.dim
    eye = np.eye(d)
    blocks = []
    for v in list(e.matrices) + list(e.adjoints()):
        # row-major vec: vec(vX - Xv) = (kron(v, I) - kron(I, v^T)) vec(X)
        blocks.append(np.kron(v, eye) - np.kron(eye, v.T))
    return int(sla.null_space(np.vstack(blocks), rcond=tol).shape[1])


# =============================================================================
# ENSEMBLE DOCUMENTS
# =============================================================================

def _matrix_to_rows(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def _rows_to_matrix(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ConfigError(f"matrix must be given as rows of [re, im] pairs, got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def ensemble_to_dict(e: KrausEnsemble) -> dict:
    doc = {
        "dim": e.dim,
        "kraus": [{"weight": p, "matrix": _matrix_to_rows(v)} for p, v in e.items()],
    }
    if e.name:
        doc["name"] = e.name
    return doc


def ensemble_from_dict(doc: dict) -> KrausEnsemble:
    try:
        dim = int(doc["dim"])
        items = [(float(k["weight"]), _rows_to_matrix(k["matrix"])) for k in doc["kraus"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed ensemble document: {exc}") from exc
    e = KrausEnsemble.from_items(items, name=str(doc.get("name", "")))
    if e.dim != dim:
        raise ConfigError(f"ensemble document declares dim {dim} but matrices are {e.dim}x{e.dim}")
    return e


def load_ensemble(path) -> KrausEnsemble:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Ensemble file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    e = ensemble_from_dict(doc)
    if not e.name:
        e.name = path.stem
    return e


def dump_ensemble(e: KrausEnsemble, path) -> Path:
    """Write the ensemble document; floats are emitted with repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(ensemble_to_dict(e), indent=2) + "\n")
    return path
