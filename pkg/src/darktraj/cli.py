#!/usr/bin/env python3
"""
darktraj command-line interface

Validate Kraus ensembles, find their maximal dark subspaces and describe the
invariant measures of the projective trajectory chain.

Usage:
    darktraj validate --example 1                  # fixed point, irreducibility, period
    darktraj pipeline --example 1 --variant 5c     # every stage plus summary.json
    darktraj convergence --example 2               # darkness gap, s(n) and Cesaro W1 curves
    darktraj dark --config experiment.json         # one stage and its prerequisites
"""

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .artifacts import (
    ATLAS,
    CHI,
    FAMILY,
    GROUP,
    INVARIANCE,
    SUMMARY,
    build_summary,
    plain,
    write_json,
    write_rows,
)
from .channel import REDUCIBLE, ChannelReport, KrausEnsemble, commutant_dimension, ensemble_to_dict, fixed_point
from .config import ExperimentConfig, apply_overrides, load_config, load_preset
from .darkspace import (
    EXHAUSTIVE_LIMIT,
    DarkAtlas,
    EmpiricalDarkMeasure,
    dark_chain_graph,
    dark_transition_matrix,
    discover_maximal_dark,
    estimate_chi_inv,
    find_atom,
    is_aperiodic_chain,
    s_curve,
    stationary_dark_measure,
)
from .errors import ConfigError, PreconditionError, StageError, StochasticityError
from .family import (
    ErgodicSampleSet,
    InvarianceResult,
    IsometryFamily,
    SmartnessReport,
    UnitaryGroupClosure,
    build_smart_family,
    check_smart,
    classify_transitivity,
    embedding_family,
    group_closure,
    induced_generators,
    invariance_residual,
    is_unique_invariant,
    sample_ergodic_measure,
)
from .linalg import Ray, Subspace, make_rng, random_ray, spawn_seeds
from .measures import bloch_rows, cesaro_convergence_curve, fit_log_slope
from .presets import VARIANTS, rotation
from .trajectory import darkness_gap_curve

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_STOCHASTICITY = 2
EXIT_REDUCIBLE = 3
EXIT_IO = 4
EXIT_STAGE = 5

# Per-stage seeds are spawned from the experiment seed in this order
SEED_SLOTS = ("dark", "chi", "smart", "base", "ergodic", "invariance", "gap", "cesaro")

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="darktraj",
        description="Quantum trajectories, dark subspaces and invariant measures",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s validate --example 1                       Fixed point, irreducibility and period
  %(prog)s validate --example 2 --theta 0.62 --phi 0.41
  %(prog)s validate --ensemble kraus.json             Validate an ensemble file
  %(prog)s pipeline --example 1 --variant 5c          Full pipeline, artifacts in darktraj_out/
  %(prog)s pipeline --example 3 --with-v3 --out run3  Example 3 with the extra Kraus item
  %(prog)s convergence --example 2 --format json      Convergence curves as JSON rows
  %(prog)s group --config experiment.json --seed 7    Stages up to the induced group

Exit codes: 0 ok, 1 unexpected error, 2 stochasticity violated,
            3 reducible ensemble, 4 I/O or configuration error, 5 stage failure.
Logging level: DARKTRAJ_LOG=DEBUG|INFO|WARNING|ERROR (default WARNING), or -v/-vv.
        """
    )

    common = argparse.ArgumentParser(add_help=False)
    source = common.add_argument_group("experiment")
    source.add_argument("--config", help="Experiment document (JSON)")
    source.add_argument("--ensemble", help="Ensemble document (JSON); default stage parameters")
    source.add_argument("--example", choices=sorted(VARIANTS), help="Bundled example preset")
    source.add_argument("--variant", help="Preset variant (e.g. 5a, 5b, 5c, 6a, 4a, 4b)")
    source.add_argument("--seed", type=int, help="Experiment seed (unsigned 64-bit)")
    source.add_argument("--out", help="Output directory (default darktraj_out/<name>)")
    source.add_argument("--format", choices=["csv", "json"], help="Format of tabular artifacts")
    source.add_argument("-v", "--verbose", action="count", default=0, help="-v INFO, -vv DEBUG")

    tols = common.add_argument_group("tolerances")
    for name in ("stochasticity", "darkness", "dedup", "rank", "peripheral"):
        tols.add_argument(f"--tol-{name}", type=float, metavar="X", help=f"Override the {name} tolerance")

    params = common.add_argument_group("example parameters")
    params.add_argument("--theta-x", type=float, help="Example 1: u2 = R_x(theta_x)")
    params.add_argument("--theta-z", type=float, help="Example 1: u3 = R_z(theta_z)")
    params.add_argument("--theta", type=float, help="Example 2: first angle")
    params.add_argument("--phi", type=float, help="Example 2: second angle")
    params.add_argument("--q", type=float, help="Example 3: weight parameter in (0, 1)")
    params.add_argument("--with-v3", action="store_true", help="Example 3: add v3 = Id (x) i sigma_y")

    subparsers = parser.add_subparsers(dest="command", help="Command")
    subparsers.add_parser("validate", parents=[common], help="Stochasticity, fixed point, irreducibility, period")
    subparsers.add_parser("pipeline", parents=[common], help="Run every stage and write a summary")
    subparsers.add_parser("convergence", parents=[common], help="Darkness gap, s(n) and Cesaro W1 curves")
    subparsers.add_parser("dark", parents=[common], help="Discover maximal dark subspaces")
    subparsers.add_parser("chi", parents=[common], help="Invariant measure of the dark chain")
    subparsers.add_parser("group", parents=[common], help="Isometry family and induced unitary group")
    subparsers.add_parser("ergodic", parents=[common], help="Ergodic measure samples and invariance check")

    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_ERROR

    configure_logging(args.verbose)

    try:
        config = load_experiment(args)
        if args.command == "validate":
            return cmd_validate(config)
        elif args.command == "pipeline":
            return cmd_pipeline(config)
        elif args.command == "convergence":
            return cmd_convergence(config)
        elif args.command == "dark":
            return cmd_dark(config)
        elif args.command == "chi":
            return cmd_chi(config)
        elif args.command == "group":
            return cmd_group(config)
        elif args.command == "ergodic":
            return cmd_ergodic(config)
    except StochasticityError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_STOCHASTICITY
    except StageError as e:
        print(f"Error in stage '{e.stage}': {e.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (OSError, ConfigError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_IO
    except Exception as e:
        logger.debug("unexpected failure", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_ERROR


def configure_logging(verbose: int = 0):
    """Root logger on stderr; level from DARKTRAJ_LOG, lowered by -v."""
    name = os.environ.get("DARKTRAJ_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    if verbose:
        level = min(level, logging.INFO if verbose == 1 else logging.DEBUG)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)
    logging.getLogger().setLevel(level)


def load_experiment(args) -> ExperimentConfig:
    """Experiment from --config, --ensemble or --example, then flag overrides."""
    sources = [s for s in (args.config, args.ensemble, args.example) if s]
    if len(sources) != 1:
        raise ConfigError("give exactly one of --config, --ensemble or --example")
    if args.variant and not args.example:
        raise ConfigError("--variant needs --example")
    if args.config:
        config = load_config(args.config)
    elif args.ensemble:
        config = ExperimentConfig(ensemble={"path": args.ensemble}, name=Path(args.ensemble).stem)
    else:
        config = load_preset(args.example, args.variant)
    return apply_overrides(config, args)


# =============================================================================
# STAGES
# =============================================================================

@contextmanager
def stage(name: str):
    """Wrap failures of a stage in StageError; stochasticity and I/O pass through."""
    logger.info("stage %s", name)
    try:
        yield
    except (StochasticityError, ConfigError, OSError, StageError):
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc


@dataclass(eq=False)
class Run:
    """State carried from one stage to the next."""
    config: ExperimentConfig
    ensemble: KrausEnsemble
    report: ChannelReport
    seeds: dict
    atlas: Optional[DarkAtlas] = None
    chi: Optional[EmpiricalDarkMeasure] = None
    family: Optional[IsometryFamily] = None
    smartness: Optional[SmartnessReport] = None
    group: Optional[UnitaryGroupClosure] = None
    verdict: Optional[str] = None
    samples: Optional[ErgodicSampleSet] = None
    invariance: Optional[InvarianceResult] = None

    @property
    def out_dir(self) -> Path:
        return Path(self.config.out_dir)

    @property
    def reducible(self) -> bool:
        return self.report.verdict == REDUCIBLE


def run_validate(config: ExperimentConfig) -> Run:
    e = config.build_ensemble()
    with stage("validate"):
        report = fixed_point(e, config.tolerances.stochasticity, config.tolerances.peripheral)
    seeds = dict(zip(SEED_SLOTS, spawn_seeds(config.seed, len(SEED_SLOTS))))
    return Run(config, e, report, seeds)


def run_dark(run: Run) -> Run:
    p, tol = run.config.discovery, run.config.tolerances
    with stage("dark"):
        run.atlas = discover_maximal_dark(
            run.ensemble, n_probes=p.n_probes, chain_len=p.chain_len, seed=run.seeds["dark"],
            tol=tol.darkness, dedup_tol=tol.dedup, close=p.close, cap=p.cap, rank_tol=tol.rank,
        )
    return run


def run_chi(run: Run) -> Run:
    p = run.config.chi
    with stage("chi"):
        run.chi = estimate_chi_inv(run.ensemble, run.atlas, n_burn=p.n_burn, n_keep=p.n_keep,
                                   seed=run.seeds["chi"], period=run.report.period, max_atoms=p.max_atoms)
    return run


def resolve_center(run: Run) -> Subspace:
    """Center from the configured coordinates, else the heaviest atom of chi."""
    coords = run.config.family.center
    atoms = run.chi.atoms
    if coords is None:
        return atoms[int(np.argmax(run.chi.weights))]
    q = Subspace.coordinate(run.ensemble.dim, coords)
    idx = find_atom(atoms, q, run.config.tolerances.dedup)
    if idx is None:
        raise PreconditionError(f"center span(e_{coords}) is not an atom of the dark-chain measure")
    return atoms[idx]


def run_family(run: Run) -> Run:
    p = run.config.family
    with stage("family"):
        center = resolve_center(run)
        if p.kind == "smart":
            run.family = build_smart_family(run.ensemble, run.atlas, run.chi, center)
            if p.check_smart:
                run.smartness = check_smart(run.family, run.chi, run.ensemble, p.word_budget,
                                            p.max_word_len, run.seeds["smart"])
        else:
            atoms = list(run.chi.atoms)
            twists = {}
            for coords, axis, angle in run.config.twist_angles():
                idx = find_atom(atoms, Subspace.coordinate(run.ensemble.dim, coords), run.config.tolerances.dedup)
                if idx is None:
                    raise PreconditionError(f"twisted subspace span(e_{coords}) is not an atom")
                twists[idx] = rotation(axis, angle)
            run.family = embedding_family(atoms, twists=twists)
            run.family.center_index = run.family.index_of(center)
    return run


def run_group(run: Run) -> Run:
    p = run.config.group
    with stage("group"):
        gens = induced_generators(run.family, run.ensemble, run.chi)
        run.group = group_closure(gens, cap=p.cap, eps=p.eps)
        run.verdict = classify_transitivity(run.group)
    return run


def ergodic_base(run: Run) -> Ray:
    base = run.config.ergodic.base
    if base == "generic":
        return random_ray(run.family.r_m, make_rng(run.seeds["base"]))
    arr = np.asarray(base, dtype=np.float64)
    vec = arr[:, 0] + 1j * arr[:, 1] if arr.ndim == 2 else arr.astype(np.complex128)
    return Ray(vec)


def run_ergodic(run: Run) -> Run:
    p = run.config.ergodic
    with stage("ergodic"):
        run.samples = sample_ergodic_measure(run.family, run.chi, ergodic_base(run), run.group,
                                             p.n_samples, run.seeds["ergodic"], p.cluster_tol)
    with stage("invariance"):
        run.invariance = invariance_residual(run.samples, run.ensemble, run.seeds["invariance"],
                                             p.n_boot, p.max_support, p.cluster_tol)
    return run


# =============================================================================
# ARTIFACTS
# =============================================================================

def validate_doc(run: Run) -> dict:
    e = run.ensemble
    doc = run.report.to_dict()
    doc.update({"name": e.name, "dim": e.dim, "size": e.size,
                "commutant_dimension": commutant_dimension(e)})
    return doc


def atlas_doc(run: Run) -> dict:
    return plain(run.atlas.to_dict())


def chi_doc(run: Run) -> dict:
    e, tol = run.ensemble, run.config.tolerances
    doc = run.chi.to_dict()
    doc["period"] = run.report.period
    doc["transition_matrix"] = dark_transition_matrix(e, run.chi.atoms, tol.dedup)
    doc["stationary_weights"] = stationary_dark_measure(e, run.chi.atoms, tol.dedup).weights
    doc["aperiodic"] = is_aperiodic_chain(dark_chain_graph(e, run.chi.atoms, tol.dedup))
    return plain(doc)


def family_doc(run: Run) -> dict:
    doc = run.family.to_dict()
    doc["kind"] = run.config.family.kind
    if run.smartness is not None:
        doc["smartness"] = run.smartness.to_dict()
    return plain(doc)


def group_doc(run: Run) -> dict:
    return plain(run.group.to_dict())


def sample_rows(run: Run) -> tuple:
    """(vector rows, Bloch rows) of the ergodic sample: atoms if finite, raw samples otherwise."""
    s = run.samples
    if s.centers is not None:
        points, weights = s.centers, s.center_weights
    else:
        points, weights = s.samples, np.full(len(s.samples), 1.0 / len(s.samples))
    rows = []
    for x, w in zip(points, weights):
        row = {"weight": float(w)}
        for k, z in enumerate(x.vector):
            row[f"re{k}"], row[f"im{k}"] = float(z.real), float(z.imag)
        rows.append(row)
    bloch = []
    if run.family.r_m == 2:
        frames = [(q, run.family.lookup(q)) for q in run.chi.atoms]
        bloch = bloch_rows(points, weights, frames)
    return rows, bloch


def write_stage_artifacts(run: Run) -> list:
    """Write every document the run has produced so far; returns the paths."""
    out = run.out_dir
    paths = [
        write_json(out / "ensemble.json", ensemble_to_dict(run.ensemble)),
        write_json(out / "validate.json", validate_doc(run)),
    ]
    if run.atlas is not None:
        paths.append(write_json(out / ATLAS, atlas_doc(run)))
    if run.chi is not None:
        paths.append(write_json(out / CHI, chi_doc(run)))
    if run.family is not None:
        paths.append(write_json(out / FAMILY, family_doc(run)))
    if run.group is not None:
        paths.append(write_json(out / GROUP, group_doc(run)))
    if run.samples is not None:
        rows, bloch = sample_rows(run)
        paths.append(write_rows(out, "samples", rows, run.config.format))
        if bloch:
            paths.append(write_rows(out, "bloch", bloch, run.config.format,
                                    ["bx", "by", "bz", "weight", "sphere_index"]))
    if run.invariance is not None:
        paths.append(write_json(out / INVARIANCE, run.invariance.to_dict()))
    return paths


# =============================================================================
# COMMANDS
# =============================================================================

def print_report(run: Run):
    e, r = run.ensemble, run.report
    print(f"Ensemble: {e.name or '<unnamed>'} (d={e.dim}, {e.size} Kraus matrices)")
    print(f"Stochasticity residual: {r.stochasticity_residual:.3e}")
    print(f"Verdict: {r.verdict.upper()}")
    print(f"Fixed-point multiplicity: {r.fixed_point_multiplicity}")
    print(f"Smallest fixed-point eigenvalue: {r.min_eigenvalue:.3e}")
    if r.period is not None:
        print(f"Period: {r.period}")
    print(f"Spectral gap: {r.spectral_gap:.3e}")


def refuse_reducible(run: Run) -> bool:
    if run.reducible:
        print("Ensemble is reducible; the dark-chain stages need an irreducible ensemble.", file=sys.stderr)
        return True
    return False


def cmd_validate(config: ExperimentConfig) -> int:
    """Stochasticity, fixed point, irreducibility and period."""
    run = run_validate(config)
    print_report(run)
    path = write_json(run.out_dir / "validate.json", validate_doc(run))
    print(f"\nReport: {path}")
    return EXIT_OK if run.report.is_irreducible else EXIT_REDUCIBLE


def cmd_dark(config: ExperimentConfig) -> int:
    """Discover maximal dark subspaces."""
    run = run_dark(run_validate(config))
    print_report(run)
    print(f"\nMaximal dark dimension r_m: {run.atlas.r_m}")
    print(f"Atlas: {len(run.atlas)} dark subspaces")
    write_stage_artifacts(run)
    print(f"Artifacts: {run.out_dir}")
    return EXIT_OK


def _through_chi(config: ExperimentConfig) -> Optional[Run]:
    run = run_validate(config)
    if refuse_reducible(run):
        return None
    return run_chi(run_dark(run))


def _print_chi(run: Run):
    print(f"Maximal dark dimension r_m: {run.atlas.r_m}")
    print(f"Atlas: {len(run.atlas)} dark subspaces, period {run.report.period}")
    weights = ", ".join(f"{w:.4f}" for w in run.chi.weights)
    print(f"chi_inv: {len(run.chi.atoms)} atoms, weights ({weights})")


def cmd_chi(config: ExperimentConfig) -> int:
    """Invariant measure of the dark chain."""
    run = _through_chi(config)
    if run is None:
        return EXIT_REDUCIBLE
    _print_chi(run)
    write_stage_artifacts(run)
    print(f"\nArtifacts: {run.out_dir}")
    return EXIT_OK


def _print_group(run: Run):
    g = run.group
    size = f"Finite({g.order})" if g.is_finite else f"Continuous(lie_dim={g.lie_dim})"
    print(f"Family: {run.config.family.kind}, {len(run.family)} isometries")
    if run.smartness is not None:
        print(f"Smartness: {'certified' if run.smartness.certified else 'NOT certified'} "
              f"(worst residual {run.smartness.worst:.2e})")
    print(f"Induced group: {size}, {len(g.generators)} generators")
    print(f"Transitivity: {run.verdict}")
    print(f"Unique invariant measure: {'yes' if is_unique_invariant(run.verdict) else 'no'}")


def cmd_group(config: ExperimentConfig) -> int:
    """Isometry family and the unitary group it induces."""
    run = _through_chi(config)
    if run is None:
        return EXIT_REDUCIBLE
    run = run_group(run_family(run))
    _print_chi(run)
    _print_group(run)
    write_stage_artifacts(run)
    print(f"\nArtifacts: {run.out_dir}")
    return EXIT_OK


def _print_ergodic(run: Run):
    s, inv = run.samples, run.invariance
    if s.centers is not None:
        print(f"Ergodic sample: {len(s)} samples in {len(s.centers)} atoms")
    else:
        print(f"Ergodic sample: {len(s)} samples (continuous support)")
    print(f"Invariance W1: {inv.distance:.3e} (null {inv.null_mean:.3e} +- {inv.standard_error:.3e}, "
          f"excess {inv.ratio:.2f} SE, {inv.method})")


def cmd_ergodic(config: ExperimentConfig) -> int:
    """Samples of an ergodic measure and their invariance check."""
    run = _through_chi(config)
    if run is None:
        return EXIT_REDUCIBLE
    run = run_ergodic(run_group(run_family(run)))
    _print_group(run)
    _print_ergodic(run)
    write_stage_artifacts(run)
    print(f"\nArtifacts: {run.out_dir}")
    return EXIT_OK


def cmd_pipeline(config: ExperimentConfig) -> int:
    """dark -> chi -> family -> group -> ergodic -> invariance -> summary."""
    run = _through_chi(config)
    if run is None:
        return EXIT_REDUCIBLE
    run = run_ergodic(run_group(run_family(run)))
    _print_chi(run)
    _print_group(run)
    _print_ergodic(run)
    write_stage_artifacts(run)
    summary = build_summary(atlas_doc(run), chi_doc(run), group_doc(run),
                            plain(run.invariance.to_dict()), family_doc(run), config.name)
    path = write_json(run.out_dir / SUMMARY, summary)
    print(f"\nSummary: {path}")
    return EXIT_OK


def _fit_positive(ns, values) -> Optional[dict]:
    """Fit of log(value) against n over the positive points; None if fewer than two."""
    pts = [(n, v) for n, v in zip(ns, values) if v > 1e-300]
    if len(pts) < 2:
        return None
    xs, ys = zip(*pts)
    return fit_log_slope(xs, ys)


def cmd_convergence(config: ExperimentConfig) -> int:
    """Darkness gap, s(n) and Cesaro W1 curves with fitted log-slopes."""
    run = run_dark(run_validate(config))
    e, p, fmt = run.ensemble, config.convergence, config.format
    out = run.out_dir
    fits = {"r_m": run.atlas.r_m, "period": run.report.period}

    with stage("darkness_gap"):
        seeds = spawn_seeds(run.seeds["gap"], p.gap_seeds)
        gap = darkness_gap_curve(e, run.atlas.representatives, p.gap_n_max, seeds)
    write_rows(out, "darkness_gap", gap, fmt, ["n", "mean_darkness_gap", "mean_log_gap"])
    # slope of log(mean gap); mean_log_gap stays a table column only
    positive = [row for row in gap if row["mean_darkness_gap"] > 1e-12]
    fits["darkness_gap"] = _fit_positive([r["n"] for r in positive], [r["mean_darkness_gap"] for r in positive])
    print(f"Darkness gap at n={p.gap_n_max}: {gap[-1]['mean_darkness_gap']:.3e}")

    r_m = run.atlas.r_m
    if 1 <= r_m < e.dim:
        mode = p.s_mode
        if mode == "exhaustive" and e.size ** p.s_n_max > EXHAUSTIVE_LIMIT:
            logger.warning("%d^%d words exceed the exhaustive limit; s(n) by Monte Carlo", e.size, p.s_n_max)
            mode = "monte_carlo"
        with stage("s_n"):
            s_rows = s_curve(e, p.s_n_max, r_m, mode, p.s_samples, run.seeds["gap"])
        write_rows(out, "s_n", s_rows, fmt, ["n", "s_n"])
        fits["s_n"] = _fit_positive([r["n"] for r in s_rows[1:]], [r["s_n"] for r in s_rows[1:]])
        print(f"s({p.s_n_max}) = {s_rows[-1]['s_n']:.3e}")
    else:
        logger.info("s(n) is not defined for r_m=%d, d=%d; skipped", r_m, e.dim)
        fits["s_n"] = None

    if run.reducible:
        logger.warning("reducible ensemble: Cesaro W1 curve skipped")
        fits["w1"] = None
    else:
        with stage("cesaro"):
            chi0 = EmpiricalDarkMeasure.dirac(run.atlas.representatives[0])
            w1 = cesaro_convergence_curve(e, run.atlas, chi0, run.report.period, p.cesaro_n_max,
                                          p.cesaro_samples, run.seeds["cesaro"])
        write_rows(out, "w1", w1, fmt, ["n", "w1"])
        fits["w1"] = _fit_positive([r["n"] for r in w1], [r["w1"] for r in w1])
        print(f"Cesaro W1 at n={p.cesaro_n_max}: {w1[-1]['w1']:.3e}")

    write_json(out / "validate.json", validate_doc(run))
    write_json(out / ATLAS, atlas_doc(run))
    path = write_json(out / "convergence.json", fits)
    print(f"\nSummary: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
