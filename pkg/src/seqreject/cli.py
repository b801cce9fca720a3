"""Command line interface: ``seqreject {reject, adjust, simulate, check}``.

Exit codes: 0 success, 1 a check found a violation, 2 usage or parse error.
Every report embeds the full configuration and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import bonferroni as bf
from . import files
from .adjusted import adjusted_pvalues
from .core import check_monotonicity, check_single_step_bound, run
from .logic import HypothesisUniverse, LogicalStructure, improve_admissibility
from .resampling import (
    STATISTICS,
    MaxTProcedure,
    MaxTSchedule,
    TwoSampleStatistic,
    permutation_evidence,
    sign_flip_group,
    two_sample_permutation_group,
    two_sided,
    user_group,
    verify_group,
)
from .simulation import counterexample_procedure, estimate_fwer, model_from_dict
from .stepup import Hochberg, ShafferStepUp, StepUpSuccessor, check_ordered_monotonicity
from .tree import (
    tree_basic,
    tree_improved,
    tree_improved_II,
    tree_shaffer,
    tree_shaffer_improved,
)

TREE_PROCEDURES = {
    "tree-basic": tree_basic,
    "tree-improved": tree_improved,
    "tree-improved-ii": tree_improved_II,
    "tree-shaffer": tree_shaffer,
    "tree-shaffer-improved": tree_shaffer_improved,
}

PROCEDURES = (
    "holm",
    "weighted-holm",
    "shaffer-s2",
    "hommel-p3",
    "sidak",
    "hochberg",
    "shaffer-stepup",
    "gatekeeping-serial",
    "gatekeeping-parallel",
    "gatekeeping-guilbaud",
    "closed-testing",
    "partitioning",
    *TREE_PROCEDURES,
    "maxT",
)

# negative control, accepted but never listed
HIDDEN = ("counterexample-a",)

NEEDS_STRUCTURE = ("shaffer-s2", "hommel-p3", "shaffer-stepup", "partitioning")


class UsageError(ValueError):
    pass


@dataclass
class Built:
    """A procedure ready to run, plus what is needed to report on it."""

    procedure: object
    labels: list[str]
    structure: LogicalStructure | None = None
    family: bf.ExtendedFamily | None = None
    info: dict = field(default_factory=dict)


def _universe_from(args, n: int | None, labels: list[str] | None) -> HypothesisUniverse:
    if labels is not None:
        return HypothesisUniverse(tuple(labels))
    if n is None:
        raise UsageError("cannot tell how many hypotheses there are; give --pvalues, --structure, --tree or --n")
    return HypothesisUniverse.of_size(n)


def _structure_data(args):
    return files.read_json(args.structure) if args.structure else None


def _check_labels(structure_labels, labels):
    if labels is not None and list(structure_labels) != list(labels):
        raise UsageError(
            f"--structure labels {list(structure_labels)} do not match the p-value labels {list(labels)}"
        )


def build(args, n: int | None = None, labels: list[str] | None = None, weights=None) -> Built:
    """Instantiate the procedure named by ``--procedure``."""
    pid = args.procedure
    if pid not in PROCEDURES and pid not in HIDDEN:
        raise UsageError(f"unknown procedure {pid!r}; known: {', '.join(PROCEDURES)}")
    if pid == "counterexample-a":
        schedule, structure = counterexample_procedure()
        return Built(schedule, list(structure.labels), structure, info={"negative_control": True})
    if pid in TREE_PROCEDURES:
        if not args.tree:
            raise UsageError("tree required: pass --tree FILE")
        tree = files.load_tree(args.tree)
        _check_labels(tree.labels, labels)
        return Built(TREE_PROCEDURES[pid](tree), list(tree.labels), tree.induced_structure())
    if pid == "maxT":
        return Built(MaxTSchedule(n if n is not None else len(labels)), list(labels or []))

    data = _structure_data(args)
    structure = None
    if data is not None:
        structure = files.structure_from_dict(data)
        _check_labels(structure.labels, labels)
        universe = structure.universe
    else:
        if pid in NEEDS_STRUCTURE or (pid == "closed-testing" and args.local == "table"):
            raise UsageError("structure required: pass --structure FILE")
        universe = _universe_from(args, n, labels)
        structure = LogicalStructure.free(universe)
    n = universe.count
    out_labels = list(universe.labels)

    if pid in ("closed-testing", "partitioning"):
        local = _local_test(args, data, universe)
        if pid == "closed-testing":
            family = bf.closed_testing(structure, local)
        else:
            family = bf.partitioning(structure, local)
        return Built(family.schedule, out_labels, family.structure, family)

    if pid in ("hochberg", "shaffer-stepup"):
        values = Hochberg(args.k_bound) if pid == "hochberg" else ShafferStepUp(structure)
        return Built(StepUpSuccessor(n, values), out_labels, structure)

    if pid == "holm":
        schedule = bf.holm(n)
    elif pid == "weighted-holm":
        if weights is None and args.weights:
            weights = [float(x) for x in args.weights.split(",")]
        if weights is None:
            raise UsageError("weights required: add a 'weight' column or pass --weights")
        schedule = bf.holm(n, weights)
    elif pid == "shaffer-s2":
        schedule = bf.shaffer_s2(structure)
    elif pid == "hommel-p3":
        schedule = bf.hommel_p3(structure)
    elif pid == "sidak":
        schedule = bf.sidak_stepdown(n)
    else:
        fam_data = files.read_json(args.families) if args.families else data
        if fam_data is None or "families" not in fam_data:
            raise UsageError("families required: pass --families FILE")
        fams = files.families_from_dict(fam_data, universe)
        if pid == "gatekeeping-serial":
            schedule = bf.gatekeeping_serial(n, fams)
        else:
            schedule = bf.gatekeeping_parallel(n, fams, guilbaud=pid == "gatekeeping-guilbaud")
    if args.admissible:
        if structure.is_free:
            raise UsageError("--admissible needs an explicit --structure")
        schedule = improve_admissibility(schedule, structure)
    return Built(schedule, out_labels, structure)


def _local_test(args, data, universe):
    fallback = bf.LOCAL_TESTS.get(args.local)
    if args.local == "table" or (data is not None and "local_pvalues" in data):
        if data is None or "local_pvalues" not in data:
            raise UsageError("--local table needs 'local_pvalues' in the structure file")
        return files.local_table_from_dict(data, universe, fallback=fallback)
    return fallback


# ---------------------------------------------------------------------------
# evidence


def _resampling_evidence(args):
    if not args.data:
        raise UsageError("maxT needs --data FILE")
    labels, X, groups = files.read_data(args.data, args.group_col)
    group = _group(args, X.shape[0], groups)
    stat = _statistic(args, groups)
    return labels, permutation_evidence(stat, X, group), group


def _statistic(args, groups):
    if args.transforms == "permute":
        if groups is None:
            raise UsageError("--transforms permute needs --group-col")
        stat = TwoSampleStatistic(groups, studentize=args.statistic == "t")
    else:
        stat = STATISTICS[args.statistic]
    return two_sided(stat) if args.two_sided else stat


def _group(args, n_rows, groups=None):
    if args.transforms == "signflip":
        return sign_flip_group(n_rows, sample=args.n_perms, seed=args.seed)
    if args.transforms == "permute":
        if groups is not None:
            kinds = np.unique(groups)
            if kinds.size != 2:
                raise UsageError(f"--group-col must have exactly two groups, got {kinds.tolist()}")
            n1 = int(np.count_nonzero(groups == kinds[0]))
            return two_sample_permutation_group(n1, n_rows - n1, sample=args.n_perms, seed=args.seed)
        return two_sample_permutation_group(1, n_rows - 1, sample=args.n_perms, seed=args.seed)
    if not args.group_file:
        raise UsageError("--transforms file needs --group-file FILE")
    return user_group(files.load_group_elements(args.group_file))


def _pvalue_evidence(args):
    if not args.pvalues:
        raise UsageError("--pvalues FILE required")
    return files.read_pvalues(args.pvalues)


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _mask_labels(mask: int, labels) -> list[str]:
    return [labels[h] for h in range(len(labels)) if mask >> h & 1]


def _emit(args, report: dict, rows: list[dict] | None = None):
    if args.format == "csv" and rows is not None:
        files.write_text(files.to_csv(rows), args.out)
    else:
        files.write_text(files.to_json(report), args.out)


# ---------------------------------------------------------------------------
# subcommands


def cmd_reject(args) -> int:
    if args.procedure == "maxT":
        labels, evidence, group = _resampling_evidence(args)
        built = Built(MaxTSchedule(len(labels)), labels, info={"group": group.describe()})
        raw = evidence.observed
    else:
        labels, raw, weights = _pvalue_evidence(args)
        built = build(args, len(labels), labels, weights)
        evidence = raw
    ev = built.family.evidence(raw) if built.family else evidence
    trace = run(built.procedure, ev, args.alpha)
    report = {
        "config": _config(args),
        "seed": args.seed,
        "procedure": args.procedure,
        "labels": built.labels if not built.family else list(built.family.universe.labels),
        "rejected": _mask_labels(trace.final, built.family.universe.labels if built.family else built.labels),
        "trace": trace.to_dict(built.family.universe.labels if built.family else built.labels),
        **built.info,
    }
    if built.family:
        report["rejected_elementary"] = _mask_labels(built.family.project(trace.final), built.labels)
    rows = [
        {"label": lab, "value": float(raw[h]), "rejected": bool(trace.final >> h & 1)}
        for h, lab in enumerate(built.labels)
    ]
    _emit(args, report, rows)
    return 0


def cmd_adjust(args) -> int:
    if args.procedure == "maxT":
        labels, evidence, group = _resampling_evidence(args)
        procedure, raw, ev, family = MaxTSchedule(len(labels)), evidence.observed, evidence, None
    else:
        labels, raw, weights = _pvalue_evidence(args)
        built = build(args, len(labels), labels, weights)
        procedure, family = built.procedure, built.family
        ev = family.evidence(raw) if family else raw
    rep = adjusted_pvalues(procedure, ev)
    adjusted = rep.adjusted[list(family.elementary)] if family else rep.adjusted
    rows = [
        {
            "label": lab,
            "raw_p": float(raw[h]),
            "adjusted_p": float(adjusted[h]),
            "rejected_at_alpha": bool(adjusted[h] <= args.alpha),
        }
        for h, lab in enumerate(labels)
    ]
    report = {
        "config": _config(args),
        "seed": args.seed,
        "procedure": args.procedure,
        "rows": rows,
        "breakpoints": list(rep.breakpoints),
    }
    if args.format == "json":
        _emit(args, report)
    else:
        files.write_text(files.to_csv(rows), args.out)
    return 0


def _load_model(text: str):
    if os.path.exists(text):
        model_config = files.read_json(text)
    else:
        try:
            model_config = json.loads(text)
        except json.JSONDecodeError:
            raise UsageError(f"--model: neither a file nor valid JSON: {text!r}") from None
    if not isinstance(model_config, dict):
        raise UsageError("--model must be a JSON object with a 'kind' field")
    try:
        return model_from_dict(model_config)
    except TypeError as err:
        raise UsageError(f"--model: {err}") from None


def cmd_simulate(args) -> int:
    if not args.model:
        raise UsageError("--model required")
    model = _load_model(args.model)
    info = {}
    if args.procedure == "maxT":
        if model.evidence != "data":
            raise UsageError("maxT needs a data model such as sign-symmetric-normal")
        if args.transforms != "signflip":
            raise UsageError("simulate supports maxT with --transforms signflip only")
        group = sign_flip_group(model.n_obs, sample=args.n_perms, seed=args.seed)
        procedure = MaxTProcedure(STATISTICS[args.statistic], group)
    else:
        built = build(args, model.n, None)
        procedure = built.family or built.procedure
        info = built.info
    est = estimate_fwer(procedure, model, args.reps, args.alpha, args.seed)
    report = {
        "config": _config(args),
        "seed": args.seed,
        "procedure": args.procedure,
        "model": model.describe(),
        "fwer": est.to_dict(),
        "within_3se": est.within(args.alpha),
        **info,
    }
    _emit(args, report)
    return 0


def _verdict_dict(verdict, labels, kind):
    out = {"status": verdict.status}
    if verdict.detail:
        out["detail"] = verdict.detail
    w = verdict.witness
    if w is not None and verdict.status == "violation":
        if kind == "monotonicity":
            R, S, h = w
            out["witness"] = {"R": _mask_labels(R, labels), "S": _mask_labels(S, labels), "H": labels[h]}
        elif kind == "single_step":
            R, atom = w
            out["witness"] = {"R": _mask_labels(R, labels), "true": _mask_labels(atom, labels)}
        else:
            out["witness"] = list(w)
    return out


def cmd_check(args) -> int:
    checks = {}
    if args.procedure == "maxT":
        if args.data:
            _, X, groups = files.read_data(args.data, args.group_col)
            group = _group(args, X.shape[0], groups)
        elif args.transforms == "file":
            group = _group(args, None)
        else:
            raise UsageError("maxT check needs --data FILE or --transforms file")
        checks["group"] = _verdict_dict(verify_group(group), [], "group")
        labels = None
    else:
        labels_in, n = None, args.n
        if args.pvalues:
            labels_in, _, _ = files.read_pvalues(args.pvalues)
            n = len(labels_in)
        built = build(args, n, labels_in)
        labels = list(built.family.universe.labels) if built.family else built.labels
        proc = built.procedure
        if isinstance(proc, StepUpSuccessor):
            w = check_ordered_monotonicity(proc.values, proc.n, args.alpha)
            checks["monotonicity"] = (
                {"status": "ok"}
                if w is None
                else {
                    "status": "violation",
                    "witness": {"R": _mask_labels(w[0], labels), "S": _mask_labels(w[1], labels), "i": w[2]},
                }
            )
            checks["single_step"] = {
                "status": "not-applicable",
                "detail": "step-up procedures rely on the Simes inequality",
            }
        else:
            sampled = args.sampled
            if sampled is None and proc.n > 20:
                raise UsageError(f"{proc.n} hypotheses is too many for the exhaustive check; pass --sampled N")
            mono = check_monotonicity(proc, built.structure, args.alpha, sampled=sampled, seed=args.seed)
            checks["monotonicity"] = _verdict_dict(mono, labels, "monotonicity")
            if built.structure is not None and proc.n <= 20:
                single = check_single_step_bound(proc, built.structure, args.alpha)
                checks["single_step"] = _verdict_dict(single, labels, "single_step")
    failed = any(c["status"] == "violation" for c in checks.values())
    report = {
        "config": _config(args),
        "seed": args.seed,
        "procedure": args.procedure,
        "checks": checks,
        "passed": not failed,
    }
    files.write_text(files.to_json(report), args.out)
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# argument parsing


def _level(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {v}")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqreject", description="Familywise error control by sequential rejection."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--procedure", required=True, help=f"one of: {', '.join(PROCEDURES)}")
    common.add_argument("--alpha", type=_level, default=0.05)
    common.add_argument("--pvalues", metavar="FILE", help="CSV with columns label, p[, weight]")
    common.add_argument("--structure", metavar="FILE", help="JSON logical structure")
    common.add_argument("--tree", metavar="FILE", help="JSON hypothesis tree")
    common.add_argument("--families", metavar="FILE", help="JSON with a 'families' list")
    common.add_argument("--weights", help="comma-separated weights for weighted-holm")
    common.add_argument("--k-bound", type=_positive_int, default=None, help="Hochberg truncation")
    common.add_argument(
        "--local", choices=["bonferroni", "fisher", "simes", "table"], default="bonferroni",
        help="local test for intersection hypotheses",
    )
    common.add_argument("--admissible", action="store_true", help="apply the admissibility improvement")
    common.add_argument("--data", metavar="FILE", help="CSV data matrix for maxT")
    common.add_argument("--group-col", metavar="NAME")
    common.add_argument("--transforms", choices=["signflip", "permute", "file"], default="signflip")
    common.add_argument("--group-file", metavar="FILE", help="JSON list of transformations")
    common.add_argument("--n-perms", type=_positive_int, default=None, help="sample this many transformations")
    common.add_argument("--statistic", choices=sorted(STATISTICS), default="t")
    common.add_argument("--two-sided", action="store_true")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", metavar="FILE")
    common.add_argument("--format", choices=["json", "csv"], default=None)

    p = sub.add_parser("reject", parents=[common], help="run a procedure")
    p.set_defaults(func=cmd_reject, default_format="json")
    p = sub.add_parser("adjust", parents=[common], help="adjusted p-values")
    p.set_defaults(func=cmd_adjust, default_format="csv")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo FWER")
    p.add_argument("--model", required=True, help="JSON object or file, e.g. '{\"kind\": \"independent-uniform\", \"n\": 5}'")
    p.add_argument("--reps", type=_positive_int, default=10_000)
    p.set_defaults(func=cmd_simulate, default_format="json")
    p = sub.add_parser("check", parents=[common], help="verify monotonicity and the single-step bound")
    p.add_argument("--n", type=_positive_int, default=None, help="number of hypotheses when no file gives it")
    p.add_argument("--sampled", type=_positive_int, default=None, help="random check of N nested pairs")
    p.set_defaults(func=cmd_check, default_format="json")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.default_format
    del args.default_format
    try:
        return args.func(args)
    except (UsageError, files.ParseError, ValueError, KeyError, TypeError, OSError) as err:
        msg = err.args[0] if isinstance(err, KeyError) and err.args else err
        print(f"seqreject: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
