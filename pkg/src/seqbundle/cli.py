"""Command line entry points.

Subcommands:
  generate           sample a synthetic dataset from a generator spec
  train              fit one model family on a dataset, storing the split
  evaluate           score a trained run on its stored holdout split
  analyze-attention  attention profiles against the content-free baselines
  export-prompts     dump prompt/completion pairs for text-completion probes
  summarize          per-playlist descriptive statistics

Exit codes: 0 success, 1 usage error, 2 invalid data or constraint violation,
3 numeric failure during training or inference.

Every output is byte-deterministic for fixed inputs: JSON keys are sorted,
nothing embeds timestamps, and all randomness flows from --seed flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import artifacts, reports, synthgen
from .attention import harmonic_approx_check, playlist_correlations, session_attention_profile
from .baselines import MarkovPredictor, ZeroOrderPredictor, fit_markov, fit_zero_order
from .dataio import (
    Dataset,
    FeatureConfig,
    FeaturePipeline,
    SessionEndMode,
    Split,
    apply_session_end,
    load_dataset,
    split as split_dataset,
    write_playlists_jsonl,
    write_prompts_jsonl,
    write_sessions_jsonl,
)
from .errors import ConstraintViolation, NumericError, SchemaError, SeqBundleError
from .evalkit import evaluate_dataset, summarize_dataset, summary_to_jsonable
from .seqmodels import (
    LSTMConfig,
    MLPConfig,
    ModelKind,
    NeuralPredictor,
    TrainConfig,
    TransformerConfig,
    build_training_arrays,
    make_model,
    train_model,
)

log = logging.getLogger(__name__)

BASELINE_KINDS = ("mc", "pmc", "zero")
NEURAL_KINDS = ("mlp", "lstm", "transformer", "encoder")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def main(argv: Sequence[str] | None = None) -> int:
    args_list = list(argv) if argv is not None else sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(args_list)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConstraintViolation, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SeqBundleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqbundle",
        description="Train and inspect models of skip/play/replay listening sessions.",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a synthetic dataset")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument(
        "--name",
        choices=list(synthgen.CANONICAL_SPEC_NAMES),
        help="one of the canonical generator specs",
    )
    group.add_argument("--spec", type=Path, help="generator spec JSON file")
    p.add_argument("--n-sessions", type=int, help="override the spec's session count")
    p.add_argument("--seed", type=int, help="override the spec's seed")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument(
        "--with-rates",
        action="store_true",
        help="estimate the generator's reference hit rates (slow)",
    )
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit a model family on a dataset")
    _add_data_args(p)
    p.add_argument(
        "--model",
        required=True,
        choices=BASELINE_KINDS + NEURAL_KINDS,
        help="model family to fit",
    )
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--config", type=Path, help="JSON file of option defaults")
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--smoothing", type=float, default=None, help="markov pseudo-count")
    p.add_argument("--leak", action="store_true", default=None,
                   help="use observed remaining time (ablation; leaks the future)")
    p.add_argument("--include-duration", action="store_true", default=None)
    p.add_argument("--feasibility-mask", action="store_true", default=None,
                   help="zero structurally impossible replay probabilities")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--validation-fraction", type=float, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--n-blocks", type=int, default=None)
    p.add_argument("--n-heads", type=int, default=None)
    p.add_argument("--head-dim", type=int, default=None)
    p.add_argument("--ff-dim", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--n-layers", type=int, default=None)
    p.add_argument("--max-positions", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a trained run on its holdout")
    _add_data_args(p)
    p.add_argument("--run", type=Path, required=True, help="trained run directory")
    p.add_argument("--out", type=Path, help="output directory (default RUN/eval)")
    p.add_argument(
        "--split",
        choices=[s.value for s in Split],
        default=Split.TEST.value,
        help="which stored split to score",
    )
    p.add_argument(
        "--demand-mode",
        choices=["realized", "expected"],
        default="realized",
        help="demand rates along observed paths, or from model rollouts",
    )
    p.add_argument("--n-rollouts", type=int, default=200)
    p.add_argument("--seed", type=int, default=0, help="rollout seed")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "analyze-attention", help="attention profiles vs content-free baselines"
    )
    _add_data_args(p)
    p.add_argument("--run", type=Path, required=True, help="trained transformer run")
    p.add_argument("--out", type=Path, help="output directory (default RUN/attention)")
    p.add_argument(
        "--split",
        choices=[s.value for s in Split],
        default=Split.TEST.value,
    )
    p.set_defaults(func=cmd_analyze_attention)

    p = sub.add_parser(
        "export-prompts", help="write prompt/completion pairs as JSONL"
    )
    _add_data_args(p)
    p.add_argument("--out", type=Path, required=True, help="output JSONL file")
    p.add_argument(
        "--split",
        choices=["train", "test", "all"],
        default="all",
        help="which sessions to export (train/test need --run)",
    )
    p.add_argument("--run", type=Path, help="run directory with the stored split")
    p.add_argument(
        "--no-dedupe",
        action="store_true",
        help="keep repeated identical prompts instead of the first occurrence",
    )
    p.set_defaults(func=cmd_export_prompts)

    p = sub.add_parser("summarize", help="per-playlist descriptive statistics")
    _add_data_args(p)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_summarize)

    return parser


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", type=Path, required=True,
                   help="directory with playlists.jsonl and sessions.jsonl/csv")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl",
                   help="sessions file format")
    p.add_argument(
        "--session-end",
        choices=[m.value for m in SessionEndMode],
        default=None,
        help="tail handling: full (pad skips) or truncate (drop after last play)",
    )
    p.add_argument(
        "--lenient",
        action="store_true",
        help="drop invalid sessions with a warning instead of failing",
    )


def _data_paths(args) -> tuple[Path, Path]:
    playlists = args.data / "playlists.jsonl"
    sessions = args.data / ("sessions.jsonl" if args.format == "jsonl" else "sessions.csv")
    return playlists, sessions


def _load_data(args, session_end: str | None = None) -> Dataset:
    playlists_path, sessions_path = _data_paths(args)
    dataset = load_dataset(
        sessions_path, playlists_path, fmt=args.format, strict=not args.lenient
    )
    mode = session_end if session_end is not None else args.session_end
    if mode is not None:
        dataset = apply_session_end(dataset, SessionEndMode(mode))
    return dataset


# ---------------------------------------------------------------------------
# generate


def cmd_generate(args) -> int:
    if args.name:
        spec = synthgen.named_spec(args.name, args.n_sessions, args.seed)
    else:
        with open(args.spec, encoding="utf-8") as fh:
            spec = synthgen.spec_from_json(json.load(fh))
        if args.n_sessions is not None or args.seed is not None:
            obj = synthgen.spec_to_json(spec)
            if args.n_sessions is not None:
                obj["n_sessions"] = args.n_sessions
            if args.seed is not None:
                obj["seed"] = args.seed
            spec = synthgen.spec_from_json(obj)
    dataset = synthgen.generate(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    playlists_path = args.out / "playlists.jsonl"
    sessions_path = args.out / "sessions.jsonl"
    write_playlists_jsonl(playlists_path, dataset.playlists)
    write_sessions_jsonl(sessions_path, dataset.sessions)
    spec_obj = synthgen.spec_to_json(spec)
    if args.with_rates:
        spec_obj["reference_rates"] = {
            "most_probable_outcome": synthgen.bayes_rate(spec),
            "first_order": synthgen.first_order_rate(spec),
        }
    spec_path = reports.write_json(args.out / "generator.json", spec_obj)
    artifacts.write_manifest(
        args.out / "manifest.json",
        command="generate",
        parameters=spec_obj,
        output_files={
            "playlists": playlists_path,
            "sessions": sessions_path,
            "generator": spec_path,
        },
    )
    print(f"wrote {len(dataset.sessions)} sessions to {sessions_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


_TRAIN_DEFAULTS = {
    "train_fraction": 0.9,
    "seed": 0,
    "smoothing": 0.0,
    "leak": False,
    "include_duration": False,
    "feasibility_mask": False,
    "session_end": SessionEndMode.FULL.value,
    "epochs": 30,
    "batch_size": 16,
    "learning_rate": 1e-3,
    "validation_fraction": 0.1,
    "patience": 5,
    "embed_dim": 256,
    "n_blocks": 3,
    "n_heads": 8,
    "head_dim": 32,
    "ff_dim": 2048,
    "hidden_dim": None,  # family-specific default applied later
    "n_layers": None,
    "max_positions": 512,
}


def _resolve_options(args) -> dict:
    """Option precedence: explicit flag > --config file > built-in default."""
    resolved = dict(_TRAIN_DEFAULTS)
    if args.config is not None:
        with open(args.config, encoding="utf-8") as fh:
            file_options = json.load(fh)
        unknown = set(file_options) - set(resolved)
        if unknown:
            raise SchemaError(
                f"{args.config}: unknown config keys {sorted(unknown)}"
            )
        resolved.update(file_options)
    for key in resolved:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _model_config(model: str, opts: dict, input_dim: int):
    if model in ("transformer", "encoder"):
        return TransformerConfig(
            input_dim=input_dim,
            embed_dim=opts["embed_dim"],
            n_blocks=opts["n_blocks"],
            n_heads=opts["n_heads"],
            head_dim=opts["head_dim"],
            ff_dim=opts["ff_dim"],
            causal=model == "transformer",
            positional="fixed" if model == "transformer" else "learned",
            max_positions=opts["max_positions"],
        )
    if model == "lstm":
        return LSTMConfig(
            input_dim=input_dim,
            hidden_dim=opts["hidden_dim"] or 128,
            n_layers=opts["n_layers"] or 2,
        )
    return MLPConfig(
        input_dim=input_dim,
        hidden_dim=opts["hidden_dim"] or 256,
        n_layers=opts["n_layers"] or 3,
    )


def cmd_train(args) -> int:
    opts = _resolve_options(args)
    dataset = _load_data(args, session_end=opts["session_end"])
    dataset = split_dataset(
        dataset, train_fraction=opts["train_fraction"], seed=opts["seed"]
    )
    run_dir: Path = args.out
    run_dir.mkdir(parents=True, exist_ok=True)
    split_path = artifacts.save_split(run_dir / "split.json", dataset)

    per_playlist: dict[str, dict] = {}
    bundle_paths: dict[str, Path] = {}
    for pid in dataset.playlist_ids():
        train_sessions = dataset.train_sessions(pid)
        if not train_sessions:
            log.warning("playlist %r has no training sessions; skipping", pid)
            continue
        playlist = dataset.playlists[pid]
        if args.model in BASELINE_KINDS:
            if args.model == "zero":
                predictor = ZeroOrderPredictor(
                    table=fit_zero_order(train_sessions, playlist)
                )
                info = {"n_parameters": int(predictor.table.probs.size)}
            else:
                predictor = MarkovPredictor(
                    model=fit_markov(
                        train_sessions,
                        playlist,
                        position_dependent=args.model == "pmc",
                        smoothing=opts["smoothing"],
                    )
                )
                info = {"n_parameters": predictor.model.n_parameters}
        else:
            feature_config = FeatureConfig(
                leak=bool(opts["leak"]),
                include_duration=bool(opts["include_duration"]),
            )
            pipeline = FeaturePipeline(playlist=playlist, config=feature_config)
            pipeline.fit(train_sessions)
            kind = ModelKind(args.model)
            model = make_model(
                kind,
                _model_config(args.model, opts, feature_config.input_dim),
                seed=opts["seed"],
            )
            matrices, labels = build_training_arrays(pipeline, train_sessions)
            result = train_model(
                model,
                matrices,
                labels,
                TrainConfig(
                    epochs=opts["epochs"],
                    batch_size=opts["batch_size"],
                    learning_rate=opts["learning_rate"],
                    seed=opts["seed"],
                    validation_fraction=opts["validation_fraction"],
                    patience=opts["patience"],
                ),
            )
            predictor = NeuralPredictor(
                model=model,
                pipeline=pipeline,
                feasibility_mask=bool(opts["feasibility_mask"]),
            )
            info = {
                "n_parameters": result.n_parameters,
                "best_epoch": result.best_epoch,
                "stopped_early": result.stopped_early,
                "train_losses": list(result.train_losses),
                "val_losses": list(result.val_losses),
            }
        bundle = artifacts.save_predictor(run_dir / "models" / pid, predictor)
        bundle_paths[pid] = bundle / artifacts.BUNDLE_FILE
        per_playlist[pid] = info

    if not per_playlist:
        raise ConstraintViolation("no playlist had training sessions")

    playlists_path, sessions_path = _data_paths(args)
    run_obj = {
        "model": args.model,
        "options": {k: opts[k] for k in sorted(opts)},
        "playlists": per_playlist,
        "data_digests": {
            "playlists": artifacts.sha256_file(playlists_path),
            "sessions": artifacts.sha256_file(sessions_path),
        },
    }
    run_path = reports.write_json(run_dir / "run.json", run_obj)
    artifacts.write_manifest(
        run_dir / "manifest.json",
        command="train",
        parameters={"model": args.model, **{k: opts[k] for k in sorted(opts)}},
        input_files={"playlists": playlists_path, "sessions": sessions_path},
        output_files={
            "run": run_path,
            "split": split_path,
            **{f"model:{pid}": p for pid, p in sorted(bundle_paths.items())},
        },
    )
    for pid in sorted(per_playlist):
        print(f"trained {args.model} for playlist {pid}")
    print(f"run artifacts in {run_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate and analyze


def _load_run(args) -> tuple[dict, Dataset]:
    run_path = args.run / "run.json"
    with open(run_path, encoding="utf-8") as fh:
        run_obj = json.load(fh)
    dataset = _load_data(args, session_end=run_obj["options"]["session_end"])
    playlists_path, sessions_path = _data_paths(args)
    digests = run_obj.get("data_digests", {})
    current = {
        "playlists": artifacts.sha256_file(playlists_path),
        "sessions": artifacts.sha256_file(sessions_path),
    }
    if digests and digests != current:
        raise SchemaError(
            f"{run_path}: --data does not match the data this run was trained "
            f"on (content digests differ)"
        )
    dataset = artifacts.load_split(args.run / "split.json", dataset)
    return run_obj, dataset


def _load_predictors(args, run_obj: dict, dataset: Dataset) -> dict:
    predictors = {}
    for pid in run_obj["playlists"]:
        predictors[pid] = artifacts.load_predictor(
            args.run / "models" / pid, dataset.playlists[pid]
        )
    return predictors


def cmd_evaluate(args) -> int:
    run_obj, dataset = _load_run(args)
    predictors = _load_predictors(args, run_obj, dataset)
    report = evaluate_dataset(
        predictors,
        dataset,
        split=Split(args.split),
        demand_mode=args.demand_mode,
        n_rollouts=args.n_rollouts,
        seed=args.seed,
    )
    out_dir: Path = args.out if args.out is not None else args.run / "eval"
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = report.to_jsonable()
    payload["model"] = run_obj["model"]
    payload["split"] = args.split
    files = {
        "report": reports.write_json(out_dir / "report.json", payload),
        "hit_rates": reports.write_hit_rates_csv(out_dir / "hit_rates.csv", report),
        "confusion": reports.write_confusion_csv(out_dir / "confusion.csv", report),
        "demand": reports.write_demand_csv(out_dir / "demand.csv", report),
        "cdf": reports.write_cdf_csv(out_dir / "cdf.csv", report),
        "cdf_chart": reports.write_svg(
            out_dir / "cdf.svg",
            reports.svg_cdf_chart(
                {run_obj["model"]: list(report.position_rate_values())}
            ),
        ),
        "demand_chart": reports.write_svg(
            out_dir / "demand.svg", reports.svg_demand_chart(report)
        ),
    }
    artifacts.write_manifest(
        out_dir / "manifest.json",
        command="evaluate",
        parameters={
            "model": run_obj["model"],
            "split": args.split,
            "demand_mode": args.demand_mode,
            "n_rollouts": args.n_rollouts,
            "seed": args.seed,
        },
        output_files=files,
    )
    print(
        f"hit rate {report.hit_rate:.4f} over {report.n_scored} scored events "
        f"({len(report.results)} playlists)"
    )
    pr2 = report.demand_pseudo_r2()
    if pr2 is not None:
        print(f"demand pseudo R^2 {pr2:.4f}")
    print(f"evaluation artifacts in {out_dir}")
    return EXIT_OK


def cmd_analyze_attention(args) -> int:
    run_obj, dataset = _load_run(args)
    if run_obj["model"] != "transformer":
        raise ConstraintViolation(
            f"attention analysis needs a transformer run, got {run_obj['model']!r}"
        )
    predictors = _load_predictors(args, run_obj, dataset)
    out_dir: Path = args.out if args.out is not None else args.run / "attention"
    out_dir.mkdir(parents=True, exist_ok=True)

    profiles = []
    skipped = 0
    for pid in sorted(predictors):
        for session in dataset.sessions_for(pid, Split(args.split)):
            profile = session_attention_profile(predictors[pid], session)
            if profile is None:
                skipped += 1
            else:
                profiles.append(profile)
    if not profiles:
        raise ConstraintViolation(
            "no session was long enough for an attention profile (need >= 3 events)"
        )

    rows = []
    for p in profiles:
        corr = "" if p.correlation is None else repr(p.correlation)
        for j, (emp, base) in enumerate(zip(p.empirical, p.baseline), start=1):
            rows.append(
                [p.playlist_id, p.session_id, j, repr(emp), repr(base), corr]
            )
    csv_path = reports.write_csv(
        out_dir / "attention_profiles.csv",
        ["playlist_id", "session_id", "position", "empirical", "baseline", "correlation"],
        rows,
    )

    lengths = sorted({len(p.empirical) for p in profiles})
    payload = {
        "split": args.split,
        "n_sessions_profiled": len(profiles),
        "n_sessions_skipped_short": skipped,
        "mean_correlation_by_playlist": playlist_correlations(profiles),
        "uniform_baseline_first_key": {
            str(n): {
                "exact": harmonic_approx_check(n).exact,
                "approximation": harmonic_approx_check(n).approximation,
                "deviation_bound": harmonic_approx_check(n).bound,
            }
            for n in lengths
        },
    }
    json_path = reports.write_json(out_dir / "attention.json", payload)
    artifacts.write_manifest(
        out_dir / "manifest.json",
        command="analyze-attention",
        parameters={"split": args.split},
        output_files={"profiles": csv_path, "summary": json_path},
    )
    for pid, corr in sorted(payload["mean_correlation_by_playlist"].items()):
        print(f"playlist {pid}: mean profile correlation {corr:.4f}")
    print(f"attention artifacts in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-prompts and summarize


def cmd_export_prompts(args) -> int:
    if args.split == "all":
        dataset = _load_data(args)
        split_tag = None
    else:
        if args.run is None:
            raise ConstraintViolation(
                "--split train/test needs --run to reuse that run's stored split"
            )
        run_path = args.run / "run.json"
        with open(run_path, encoding="utf-8") as fh:
            run_obj = json.load(fh)
        dataset = _load_data(args, session_end=run_obj["options"]["session_end"])
        dataset = artifacts.load_split(args.run / "split.json", dataset)
        split_tag = Split(args.split)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    count = write_prompts_jsonl(
        args.out, dataset, split_tag=split_tag, dedupe=not args.no_dedupe
    )
    print(f"wrote {count} prompt/completion pairs to {args.out}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    dataset = _load_data(args)
    summaries = summarize_dataset(dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = reports.write_summary_csv(args.out / "summary.csv", summaries)
    json_path = reports.write_json(
        args.out / "summary.json", {"playlists": summary_to_jsonable(summaries)}
    )
    artifacts.write_manifest(
        args.out / "manifest.json",
        command="summarize",
        parameters={},
        output_files={"csv": csv_path, "json": json_path},
    )
    for s in summaries:
        print(
            f"{s.playlist_id}: {s.n_sessions} sessions, "
            f"{s.mean_tracks_played:.2f} tracks played, "
            f"{s.mean_listening_seconds:.1f}s listened on average"
        )
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
