"""
Experiment configuration.

An experiment is one JSON document: the ensemble (inline, a file path, or a
bundled example), the seeds, one parameter block per stage and the output
settings. Documents come from --config PATH or from a bundled preset
(--example N --variant V) and are then overridden by command-line flags.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .channel import KrausEnsemble, ensemble_from_dict, load_ensemble
from .errors import ConfigError
from .presets import PAULI, build_example, load_preset_document

logger = logging.getLogger(__name__)


FORMATS = ("csv", "json")
FAMILY_KINDS = ("smart", "embedding")
S_MODES = ("exhaustive", "monte_carlo")
SEED_LIMIT = 2 ** 64
DEFAULT_OUT_DIR = "darktraj_out"

# --theta-x etc. and the example they belong to
EXAMPLE_FLAGS = {
    "theta_x": "1",
    "theta_z": "1",
    "theta": "2",
    "phi": "2",
    "q": "3",
    "with_v3": "3",
}


# =============================================================================
# STAGE PARAMETERS
# =============================================================================

@dataclass
class DiscoveryParams:
    n_probes: int = 16
    chain_len: int = 400
    close: bool = True
    cap: int = 64


@dataclass
class ChiParams:
    n_burn: int = 1000
    n_keep: int = 10_000
    max_atoms: int = 512


@dataclass
class FamilyParams:
    kind: str = "smart"
    center: Optional[list] = None       # coordinate indices of the center subspace
    twists: list = field(default_factory=list)
    check_smart: bool = True
    word_budget: int = 10_000
    max_word_len: int = 20


@dataclass
class GroupParams:
    cap: int = 4096
    eps: float = 1e-6


@dataclass
class ErgodicParams:
    base: object = "generic"            # "generic" or a vector of C^{r_m} as [re, im] pairs
    n_samples: int = 10_000
    cluster_tol: float = 1e-6
    n_boot: int = 50
    max_support: int = 512


@dataclass
class ConvergenceParams:
    gap_n_max: int = 60
    gap_seeds: int = 200
    s_n_max: int = 8
    s_mode: str = "exhaustive"
    s_samples: int = 2000
    cesaro_n_max: int = 20
    cesaro_samples: int = 1000


@dataclass
class Tolerances:
    stochasticity: float = 1e-10
    darkness: float = 1e-9
    dedup: float = 1e-6
    rank: float = 1e-7
    peripheral: float = 1e-8


SECTIONS = {
    "discovery": DiscoveryParams,
    "chi": ChiParams,
    "family": FamilyParams,
    "group": GroupParams,
    "ergodic": ErgodicParams,
    "convergence": ConvergenceParams,
    "tolerances": Tolerances,
}


def _section(cls, doc, name: str):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"section '{name}' must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown keys in '{name}': {', '.join(unknown)}")
    return cls(**doc)


# =============================================================================
# EXPERIMENT
# =============================================================================

@dataclass
class ExperimentConfig:
    ensemble: object
    seeds: list = field(default_factory=lambda: [0])    # seeds[0] drives every stage; the rest are recorded only
    name: str = ""
    description: str = ""
    discovery: DiscoveryParams = field(default_factory=DiscoveryParams)
    chi: ChiParams = field(default_factory=ChiParams)
    family: FamilyParams = field(default_factory=FamilyParams)
    group: GroupParams = field(default_factory=GroupParams)
    ergodic: ErgodicParams = field(default_factory=ErgodicParams)
    convergence: ConvergenceParams = field(default_factory=ConvergenceParams)
    tolerances: Tolerances = field(default_factory=Tolerances)
    out_dir: str = DEFAULT_OUT_DIR
    format: str = "csv"
    base_dir: Optional[Path] = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    @property
    def seed(self) -> int:
        """Seed of the pipeline stages."""
        return self.seeds[0]

    @property
    def example(self) -> Optional[dict]:
        if isinstance(self.ensemble, dict) and "example" in self.ensemble:
            return self.ensemble["example"]
        return None

    def validate(self):
        if not isinstance(self.seeds, list) or not self.seeds:
            raise ConfigError("seed list must be non-empty")
        for s in self.seeds:
            if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < SEED_LIMIT:
                raise ConfigError(f"seeds must be unsigned 64-bit integers, got {s!r}")
        for f in fields(Tolerances):
            value = getattr(self.tolerances, f.name)
            if not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"tolerance '{f.name}' must be positive, got {value!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.family.kind not in FAMILY_KINDS:
            raise ConfigError(f"family kind must be one of {FAMILY_KINDS}, got {self.family.kind!r}")
        for t in self.family.twists:
            if not isinstance(t, dict) or set(t) != {"coords", "axis", "angle"} or t["axis"] not in PAULI:
                raise ConfigError(f"twist must be {{coords, axis in x/y/z, angle}}, got {t!r}")
        if self.convergence.s_mode not in S_MODES:
            raise ConfigError(f"s_mode must be one of {S_MODES}, got {self.convergence.s_mode!r}")
        for name, value in (("n_probes", self.discovery.n_probes), ("chain_len", self.discovery.chain_len),
                            ("n_keep", self.chi.n_keep), ("n_samples", self.ergodic.n_samples),
                            ("gap_seeds", self.convergence.gap_seeds)):
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"'{name}' must be a positive integer, got {value!r}")
        base = self.ergodic.base
        if not (base == "generic" or isinstance(base, list)):
            raise ConfigError(f"ergodic base must be 'generic' or a vector, got {base!r}")
        self._check_ensemble()

    def _check_ensemble(self):
        ens = self.ensemble
        if isinstance(ens, str):
            ens = {"path": ens}
            self.ensemble = ens
        if not isinstance(ens, dict):
            raise ConfigError("ensemble must be an inline document, a path or an example block")
        if "example" in ens:
            ex = ens["example"]
            if not isinstance(ex, dict) or "id" not in ex:
                raise ConfigError("example block needs an 'id'")
            ex["id"] = str(ex["id"])
            ex.setdefault("variant", None)
            ex.setdefault("params", {})
        elif "path" in ens:
            path = self.resolve(ens["path"])
            if not path.exists():
                raise ConfigError(f"ensemble file not found: {path}")
        elif "kraus" not in ens:
            raise ConfigError("ensemble block needs 'example', 'path' or inline 'kraus'")

    def resolve(self, path) -> Path:
        path = Path(path)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return path

    def build_ensemble(self) -> KrausEnsemble:
        ens = self.ensemble
        if "example" in ens:
            ex = ens["example"]
            return build_example(ex["id"], ex["variant"], ex["params"])
        if "path" in ens:
            return load_ensemble(self.resolve(ens["path"]))
        return ensemble_from_dict(ens)

    def twist_angles(self) -> list:
        return [(list(t["coords"]), t["axis"], float(t["angle"])) for t in self.family.twists]

    def to_dict(self) -> dict:
        doc = {
            "name": self.name,
            "description": self.description,
            "ensemble": self.ensemble,
            "seeds": list(self.seeds),
            "out_dir": str(self.out_dir),
            "format": self.format,
        }
        for key in SECTIONS:
            doc[key] = asdict(getattr(self, key))
        return doc

    @classmethod
    def from_dict(cls, doc: dict, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("experiment document must be a JSON object")
        known = {"name", "description", "ensemble", "seeds", "out_dir", "format"} | set(SECTIONS)
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown keys in experiment document: {', '.join(unknown)}")
        if "ensemble" not in doc:
            raise ConfigError("experiment document has no 'ensemble'")
        try:
            sections = {key: _section(c, doc.get(key), key) for key, c in SECTIONS.items()}
            return cls(
                ensemble=doc["ensemble"],
                seeds=doc.get("seeds", [0]),
                name=str(doc.get("name", "")),
                description=str(doc.get("description", "")),
                out_dir=str(doc.get("out_dir", DEFAULT_OUT_DIR)),
                format=doc.get("format", "csv"),
                base_dir=base_dir,
                **sections,
            )
        except TypeError as exc:
            raise ConfigError(f"invalid experiment document: {exc}") from exc


# =============================================================================
# LOADING AND OVERRIDES
# =============================================================================

def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    config = ExperimentConfig.from_dict(doc, base_dir=path.parent)
    if not config.name:
        config.name = path.stem
    return config


def load_preset(example_id, variant: Optional[str] = None) -> ExperimentConfig:
    config = ExperimentConfig.from_dict(load_preset_document(example_id, variant))
    logger.debug("loaded preset %s", config.name)
    return config


def apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    """Apply command-line flags on top of the document; revalidates."""
    if getattr(args, "seed", None) is not None:
        config.seeds = [args.seed]
    if getattr(args, "out", None):
        config.out_dir = args.out
    elif config.out_dir == DEFAULT_OUT_DIR and config.name:
        config.out_dir = str(Path(DEFAULT_OUT_DIR) / config.name)
    if getattr(args, "format", None):
        config.format = args.format
    for f in fields(Tolerances):
        value = getattr(args, f"tol_{f.name}", None)
        if value is not None:
            setattr(config.tolerances, f.name, value)

    for flag, example_id in EXAMPLE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is None or value is False:
            continue
        ex = config.example
        if ex is None or ex["id"] != example_id:
            raise ConfigError(f"--{flag.replace('_', '-')} applies to example {example_id} only")
        ex["params"][flag] = value
    config.validate()
    return config
