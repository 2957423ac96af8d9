"""
Built-in Kraus ensembles for the worked examples.

Example 1 (d = 4): two dark planes D_a = span(e0, e1), D_b = span(e2, e3)
swapped by both Kraus matrices, with unitaries u1..u4 acting inside the
planes. Variants fix the rotations u2 = R_x(theta_x), u3 = R_z(theta_z):

    5a  theta_x = 1,    theta_z = sqrt(2)   full SU(2), unique invariant measure
    5b  theta_x = pi,   theta_z = sqrt(2)   continuous group, not transitive
    5c  theta_x = pi,   theta_z = pi        8-element group
    6a/6b/6c  the 5c ensemble, read through embedding families twisted on D_b
              by R_z(pi/3), R_z(pi/2) and R_z(sqrt(2))

Example 2 (d = 3): dark planes span(e0, e1) and span(e1, e2) meeting in e1,
parametrised by two angles theta, phi (4a generic, 4b = (pi/2, pi/4)).

Example 3 (d = 4): v_i = b_i (x) u_i on C^2 (x) C^2, optionally with
v3 = Id (x) i sigma_y; its dark planes are y (x) C^2.

Presets are also shipped as experiment documents in presets/*.json.
"""

import json
import logging
from pathlib import Path
from typing import Optional

import numpy as np

from .channel import KrausEnsemble
from .errors import ConfigError

logger = logging.getLogger(__name__)


PRESETS_DIR = Path(__file__).parent / "presets"

ID2 = np.eye(2, dtype=np.complex128)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)

PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

EXAMPLE1_VARIANTS = {
    "5a": {"theta_x": 1.0, "theta_z": float(np.sqrt(2))},
    "5b": {"theta_x": float(np.pi), "theta_z": float(np.sqrt(2))},
    "5c": {"theta_x": float(np.pi), "theta_z": float(np.pi)},
    "6a": {"theta_x": float(np.pi), "theta_z": float(np.pi)},
    "6b": {"theta_x": float(np.pi), "theta_z": float(np.pi)},
    "6c": {"theta_x": float(np.pi), "theta_z": float(np.pi)},
}

# twist angle on D_b of the embedding family
EXAMPLE1_TWISTS = {"6a": float(np.pi / 3), "6b": float(np.pi / 2), "6c": float(np.sqrt(2))}

EXAMPLE2_VARIANTS = {
    "4a": {"theta": 0.62, "phi": 0.41},
    "4b": {"theta": float(np.pi / 2), "phi": float(np.pi / 4)},
}

EXAMPLE3_VARIANTS = {
    "base": {"q": 0.2, "with_v3": False},
    "v3": {"q": 0.2, "with_v3": True},
}

DEFAULT_VARIANTS = {"1": "5c", "2": "4a", "3": "base", "single": "base"}

VARIANTS = {
    "1": EXAMPLE1_VARIANTS,
    "2": EXAMPLE2_VARIANTS,
    "3": EXAMPLE3_VARIANTS,
    "single": {"base": {"angle": 1.0}},
}


# =============================================================================
# SMALL MATRICES
# =============================================================================

def rotation(axis: str, theta: float) -> np.ndarray:
    """R_axis(theta) = exp(i theta sigma_axis / 2)."""
    if axis not in PAULI:
        raise ConfigError(f"unknown rotation axis {axis!r}; expected x, y or z")
    return np.cos(theta / 2) * ID2 + 1j * np.sin(theta / 2) * PAULI[axis]


def r_x(theta: float) -> np.ndarray:
    return rotation("x", theta)


def r_z(theta: float) -> np.ndarray:
    return rotation("z", theta)


def s_alpha(alpha: float) -> np.ndarray:
    """Reflection [[cos, sin], [sin, -cos]]."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, s], [s, -c]], dtype=np.complex128)


def q_alpha(alpha: float) -> np.ndarray:
    """Rotation [[cos, -sin], [sin, cos]]."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def _snap(u: np.ndarray, tol: float = 1e-15) -> np.ndarray:
    """Drop roundoff entries such as cos(pi/2) so Pauli-type variants are exact."""
    out = u.copy()
    out.real[np.abs(out.real) < tol] = 0.0
    out.imag[np.abs(out.imag) < tol] = 0.0
    return out


def _block_swap(top: np.ndarray, bottom: np.ndarray) -> np.ndarray:
    """[[0, top], [bottom, 0]] on C^2 (+) C^2."""
    z = np.zeros((2, 2), dtype=np.complex128)
    return np.block([[z, top], [bottom, z]])


# =============================================================================
# EXAMPLES
# =============================================================================

def example1(theta_x: float = np.pi, theta_z: float = np.pi, unitaries: Optional[list] = None,
             name: str = "example1") -> KrausEnsemble:
    """v1 = [[0, u1/sqrt(3)], [u2/2, 0]], v2 = [[0, sqrt(2/3) u3], [sqrt(3/4) u4, 0]].

    `unitaries` = [u1, u2, u3, u4] replaces the default (Id, R_x, R_z, Id).
    """
    if unitaries is None:
        u1, u2, u3, u4 = ID2, _snap(r_x(theta_x)), _snap(r_z(theta_z)), ID2
    else:
        if len(unitaries) != 4:
            raise ConfigError(f"example 1 takes four unitaries, got {len(unitaries)}")
        u1, u2, u3, u4 = (np.asarray(u, dtype=np.complex128) for u in unitaries)
        for u in (u1, u2, u3, u4):
            if u.shape != (2, 2) or np.linalg.norm(u.conj().T @ u - ID2, 2) > 1e-10:
                raise ConfigError("example 1 unitaries must be 2x2 unitary matrices")
    v1 = _block_swap(np.sqrt(1 / 3) * u1, np.sqrt(1 / 4) * u2)
    v2 = _block_swap(np.sqrt(2 / 3) * u3, np.sqrt(3 / 4) * u4)
    return KrausEnsemble.from_items([(1.0, v1), (1.0, v2)], name=name)


def example2(theta: float = 0.62, phi: float = 0.41, name: str = "example2") -> KrausEnsemble:
    """Two rank-2 Kraus matrices with ranges span(e0, e1) and span(e1, e2)."""
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    v1 = np.array([[ct, st, ct], [st, -ct, st], [0, 0, 0]], dtype=np.complex128) / np.sqrt(2)
    v2 = np.array([[0, 0, 0], [cp, -sp, -cp], [sp, cp, -sp]], dtype=np.complex128) / np.sqrt(2)
    if min(abs(np.sin(theta)), abs(np.cos(phi))) < 1e-12:
        logger.warning("example 2 with theta in Z pi and phi in pi/2 + Z pi is reducible")
    return KrausEnsemble.from_items([(1.0, v1), (1.0, v2)], name=name)


def example3(q: float = 0.2, with_v3: bool = False, name: str = "example3") -> KrausEnsemble:
    """v_i = b_i (x) u_i with b1 = diag(sqrt q, sqrt(1-q)), b2 = [[0, sqrt q], [sqrt(1-q), 0]]."""
    if not 0 < q < 1:
        raise ConfigError(f"example 3 needs 0 < q < 1, got {q}")
    b1 = np.diag([np.sqrt(q), np.sqrt(1 - q)]).astype(np.complex128)
    b2 = np.array([[0, np.sqrt(q)], [np.sqrt(1 - q), 0]], dtype=np.complex128)
    items = [(1.0, np.kron(b1, 1j * SIGMA_X)), (1.0, np.kron(b2, 1j * SIGMA_Z))]
    if with_v3:
        items = [(0.5, v) for _, v in items] + [(0.5, np.kron(ID2, 1j * SIGMA_Y))]
    return KrausEnsemble.from_items(items, name=name)


def single_unitary(angle: float = 1.0, name: str = "single") -> KrausEnsemble:
    """One unitary on C^2: the whole space is dark and nothing purifies."""
    return KrausEnsemble.single(r_x(angle) @ r_z(np.sqrt(2) * angle), name=name)


def build_example(example_id, variant: Optional[str] = None, params: Optional[dict] = None) -> KrausEnsemble:
    """Ensemble of a preset: variant defaults, then explicit params on top."""
    key = str(example_id)
    if key not in VARIANTS:
        raise ConfigError(f"unknown example {example_id!r}; expected one of {sorted(VARIANTS)}")
    variant = variant or DEFAULT_VARIANTS[key]
    if variant not in VARIANTS[key]:
        raise ConfigError(f"example {key} has no variant {variant!r}; expected one of {sorted(VARIANTS[key])}")
    merged = dict(VARIANTS[key][variant])
    merged.update(params or {})
    name = f"example{key}-{variant}" if key != "single" else "single"
    try:
        if key == "1":
            unitaries = merged.get("unitaries")
            if unitaries is not None:
                unitaries = [_matrix_from_doc(u) for u in unitaries]
            return example1(float(merged["theta_x"]), float(merged["theta_z"]), unitaries, name=name)
        if key == "2":
            return example2(float(merged["theta"]), float(merged["phi"]), name=name)
        if key == "3":
            return example3(float(merged["q"]), bool(merged["with_v3"]), name=name)
        return single_unitary(float(merged["angle"]), name=name)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad parameters for example {key}: {exc}") from exc


def _matrix_from_doc(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 2:
        return arr[..., 0] + 1j * arr[..., 1]
    return arr.astype(np.complex128)


# =============================================================================
# PRESET DOCUMENTS
# =============================================================================

def preset_name(example_id, variant: Optional[str] = None) -> str:
    key = str(example_id)
    if key not in VARIANTS:
        raise ConfigError(f"unknown example {example_id!r}; expected one of {sorted(VARIANTS)}")
    variant = variant or DEFAULT_VARIANTS[key]
    return f"example{key}_{variant}" if key != "single" else "single"


def preset_path(example_id, variant: Optional[str] = None) -> Path:
    path = PRESETS_DIR / f"{preset_name(example_id, variant)}.json"
    if not path.exists():
        raise ConfigError(f"no bundled preset for example {example_id} variant {variant!r}")
    return path


def load_preset_document(example_id, variant: Optional[str] = None) -> dict:
    return json.loads(preset_path(example_id, variant).read_text())


def list_presets() -> list:
    return sorted(p.stem for p in PRESETS_DIR.glob("*.json"))
