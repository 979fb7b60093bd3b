"""Command-line front end over trace directories and model repositories.

Exit codes are a stable contract: 0 success, 1 strict-mode variant
verdict, 2 input or validation error.  Every stochastic step is seeded
(default 0) and the seed is echoed into each JSON report, so re-running a
command with identical inputs produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import assessors, features, render, synthrepo, trace, varmat
from .features import FeatureConfig
from .trace import parse_plane_label, plane_label


class CliError(Exception):
    """Input/validation failure; maps to exit code 2."""


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _read_trace(path: str) -> trace.SignalTrace:
    try:
        return trace.read_trace(path)
    except trace.TraceError as exc:
        raise CliError(str(exc)) from exc


def _feature_config(args) -> FeatureConfig:
    try:
        return FeatureConfig(tau=args.tau, r=args.r, sensitivity_seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _planes(tr: trace.SignalTrace, positions: str | None, modalities: str | None):
    want_pos = positions.split(",") if positions else None
    want_mod = [m.lower() for m in modalities.split(",")] if modalities else None
    if want_pos:
        known = {p for p, _ in tr.signals}
        for name in want_pos:
            if name not in known:
                raise CliError(f"unknown position {name!r}; trace has {sorted(known)}")
    if want_mod:
        for kind in want_mod:
            if kind not in trace.DIF_KINDS:
                raise CliError(f"unknown modality {kind!r}")
    out = []
    for pos, kind in tr.signals:
        if want_pos and pos not in want_pos:
            continue
        if want_mod and kind not in want_mod:
            continue
        out.append((pos, kind))
    if not out:
        raise CliError("no matching signal planes")
    return out


def cmd_synth(args) -> int:
    results = synthrepo.generate_repository(
        args.out, count=args.count, balance=args.balance, seed=args.seed, m=args.m
    )
    n_variant = sum(label for _, label in results)
    print(f"wrote {len(results)} traces to {args.out} ({n_variant} variant), repo.json included")
    return 0


def cmd_matrices(args) -> int:
    tr = _read_trace(args.trace)
    violations = trace.validate_trace(tr)
    if violations:
        raise CliError("; ".join(violations))
    out_root = Path(args.out)
    for pos, kind in _planes(tr, args.positions, args.modalities):
        matrix = varmat.compute_variance_matrix(tr, pos, kind)
        plane_dir = out_root / plane_label(pos, kind)
        plane_dir.mkdir(parents=True, exist_ok=True)
        (plane_dir / "matrix.csv").write_text(varmat.matrix_to_csv(matrix), encoding="utf-8")
        (plane_dir / "matrix.f64").write_bytes(varmat.matrix_to_f64(matrix))
        render.render_matrix(matrix, plane_dir / "matrix.ppm")
        print(f"{plane_label(pos, kind)} -> {plane_dir}")
    return 0


def cmd_features(args) -> int:
    tr = _read_trace(args.trace)
    cfg = _feature_config(args)
    try:
        vector = features.assemble_vector(tr, cfg)
    except trace.TraceError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(features.features_to_csv(vector), encoding="utf-8")
    print(f"wrote {len(vector.entries)} feature rows to {out}")
    return 0


def cmd_signals(args) -> int:
    tr = _read_trace(args.trace)
    try:
        pos, kind = parse_plane_label(args.plane)
        csv = trace.signal_plane_csv(tr, pos, kind)
    except (ValueError, trace.TraceError) as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv, encoding="utf-8")
    print(f"wrote signal plane {args.plane} to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _feature_config(args)
    try:
        records = synthrepo.load_repository(args.repo, cfg)
    except (OSError, ValueError, trace.TraceError) as exc:
        raise CliError(str(exc)) from exc
    examples = [r.example() for r in records]
    if len({ex.label for ex in examples}) < 2:
        raise CliError("repository labels are single-class; cannot train")
    if args.algo == "baseline" and any(ex.phi is None for ex in examples):
        raise CliError("baseline requires predictions in every trace")
    try:
        report = assessors.cross_validate(examples, args.algo, repeats=args.repeats, seed=args.seed)
        final = assessors.fit(examples, args.algo, seed=args.seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    assessors.save_assessor(final, out)
    report_path = Path(args.report) if args.report else out.with_suffix(".cvreport.json")
    _write_json(report_path, report.to_json_dict())
    report_path.with_suffix(".csv").write_text(report.folds_csv(), encoding="utf-8")
    print(
        f"{args.algo}: CV accuracy {report.mean:.2f}% +/- {report.std:.2f}% "
        f"({report.repeats} repeats x 3 folds); assessor -> {out}"
    )
    return 0


def cmd_assess(args) -> int:
    try:
        model = assessors.load_assessor(args.assessor)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    tr = _read_trace(args.trace)
    cfg = _feature_config(args)
    try:
        if model.kind == "baseline":
            value = np.array([assessors.robust_accuracy(tr)])
        else:
            value = features.assemble_vector(tr, cfg).values()
        label, score = assessors.predict(model, value)
    except (ValueError, trace.TraceError) as exc:
        raise CliError(str(exc)) from exc
    print(f"{tr.model_id} {label} {score:.6f}")
    if args.strict and label == 1:
        return 1
    return 0


def cmd_ablate(args) -> int:
    tr = _read_trace(args.trace)
    try:
        proportions = [float(p) for p in args.proportions.split(",")]
        pos, kind = parse_plane_label(args.plane)
        sweep = varmat.proportion_sweep(tr, pos, kind, proportions, seed=args.seed)
    except (ValueError, trace.TraceError) as exc:
        raise CliError(str(exc)) from exc
    names = ("mean", "dctny", "asymm", "g_overall")
    lines = ["proportion," + ",".join(names)]
    for p, _, feats in sweep:
        lines.append(f"{p:g}," + ",".join(f"{feats[name]:.17g}" for name in names))
    csv = "\n".join(lines) + "\n"
    payload = {
        "format_version": 1,
        "seed": args.seed,
        "plane": args.plane,
        "model_id": tr.model_id,
        "proportions": [p for p, _, _ in sweep],
        "measurements": {
            name: [feats[name] for _, _, feats in sweep] for name in names
        },
    }
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(csv, encoding="utf-8")
        _write_json(out.with_suffix(".json"), payload)
        print(f"wrote {len(sweep)}-row stability table to {out}")
    else:
        sys.stdout.write(csv)
    return 0


def cmd_correlate(args) -> int:
    cfg = _feature_config(args)
    try:
        records = synthrepo.load_repository(args.repo, cfg)
        with_preds = [r for r in records if r.phi is not None]
        table = assessors.correlation_table(
            [r.vector for r in with_preds],
            [r.phi for r in with_preds],
            [r.accuracy for r in with_preds],
        )
    except (OSError, ValueError, trace.TraceError) as exc:
        raise CliError(str(exc)) from exc
    table["seed"] = args.seed
    lines = ["measurement,robust_acc,accuracy,zero_variance"]
    for i, col in enumerate(table["columns"]):
        lines.append(
            f"{col},{table['robust_acc'][i]:.6f},{table['accuracy'][i]:.6f},"
            f"{int(table['zero_variance_flags'][i])}"
        )
    csv = "\n".join(lines) + "\n"
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(csv, encoding="utf-8")
        _write_json(out.with_suffix(".json"), table)
        print(f"wrote correlation table to {out}")
    else:
        sys.stdout.write(csv)
    return 0


def _add_feature_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", type=float, default=0.15, help="significance threshold")
    p.add_argument("--r", type=float, default=90.0, help="sensitivity subsample percent")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ivtest", description="Invariance-quality testing toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labelled model repository")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--balance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=120, help="test objects per model")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("matrices", help="compute and render variance matrices")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--positions", default=None, help="comma-separated position names")
    p.add_argument("--modalities", default=None, help="comma-separated dif kinds (max,mean)")
    p.set_defaults(func=cmd_matrices)

    p = sub.add_parser("features", help="extract the 80-dim feature vector as CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("signals", help="export one signal plane as CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--plane", required=True, help="plane label, e.g. Max@CONF")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_signals)

    p = sub.add_parser("train", help="train an assessor and report CV accuracy")
    p.add_argument("--repo", required=True, help="repo.json or its directory")
    p.add_argument("--algo", required=True, choices=assessors.ASSESSOR_KINDS)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--out", required=True, help="assessor JSON path")
    p.add_argument("--report", default=None, help="CV report path (default: <out>.cvreport.json)")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("assess", help="apply a trained assessor to one trace")
    p.add_argument("--assessor", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--strict", action="store_true", help="exit 1 on a variant verdict")
    _add_feature_flags(p)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("ablate", help="proportion sweep of matrix measurements")
    p.add_argument("--trace", required=True)
    p.add_argument("--proportions", required=True, help="comma-separated percents")
    p.add_argument("--plane", default="Max@CONF")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("correlate", help="feature/accuracy Pearson correlation table")
    p.add_argument("--repo", required=True)
    p.add_argument("--out", default=None)
    _add_feature_flags(p)
    p.set_defaults(func=cmd_correlate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
