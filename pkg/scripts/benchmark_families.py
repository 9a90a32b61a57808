#!/usr/bin/env python3
"""Train every model family on one synthetic generator and compare holdout
hit rates against the generator's simulation ceiling.

Example:
    python3 scripts/benchmark_families.py --name second_order --quick
    python3 scripts/benchmark_families.py --name frequent_pattern \\
        --n-sessions 3000 --epochs 20 --out results/
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from seqbundle.baselines import (
    MarkovPredictor,
    ZeroOrderPredictor,
    fit_markov,
    fit_zero_order,
)
from seqbundle.dataio import FeatureConfig, FeaturePipeline, Split, split
from seqbundle.evalkit import evaluate_dataset
from seqbundle.reports import write_csv
from seqbundle.seqmodels import (
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
from seqbundle.synthgen import (
    CANONICAL_SPEC_NAMES,
    bayes_rate,
    first_order_rate,
    generate,
    named_spec,
)


def neural_config(family: str, input_dim: int, args):
    if family in ("transformer", "encoder"):
        return TransformerConfig(
            input_dim=input_dim,
            embed_dim=args.embed_dim,
            n_blocks=args.n_blocks,
            n_heads=2,
            head_dim=args.embed_dim // 2,
            ff_dim=args.embed_dim,
            causal=family == "transformer",
            positional="fixed" if family == "transformer" else "learned",
            max_positions=64,
        )
    if family == "lstm":
        return LSTMConfig(input_dim=input_dim, hidden_dim=args.embed_dim, n_layers=1)
    return MLPConfig(input_dim=input_dim, hidden_dim=args.embed_dim, n_layers=2)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--name", choices=list(CANONICAL_SPEC_NAMES), default="second_order")
    parser.add_argument("--n-sessions", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=15)
    parser.add_argument("--embed-dim", type=int, default=16)
    parser.add_argument("--n-blocks", type=int, default=1)
    parser.add_argument("--learning-rate", type=float, default=0.01)
    parser.add_argument("--quick", action="store_true", help="small run (600 sessions)")
    parser.add_argument("--out", type=Path, help="also write a CSV of the table")
    args = parser.parse_args()

    n_sessions = args.n_sessions or (600 if args.quick else 2000)
    spec = named_spec(args.name, n_sessions=n_sessions)
    print(f"generator {args.name}: {n_sessions} sessions, cap {spec.cap}")

    ceiling = bayes_rate(spec, n_sessions=1500, seed=424)
    first = first_order_rate(spec, n_sessions=1500, seed=424)
    print(f"simulation ceiling {ceiling:.4f}, best first-order rule {first:.4f}\n")

    dataset = split(generate(spec), train_fraction=0.9, seed=args.seed)
    pid = spec.playlist_id
    playlist = dataset.playlists[pid]
    train = list(dataset.train_sessions(pid))

    rows = []

    def record(family, predictor, n_params, seconds):
        report = evaluate_dataset({pid: predictor}, dataset, split=Split.TEST)
        rows.append((family, report.hit_rate, n_params, seconds))
        print(f"{family:12s} hit rate {report.hit_rate:.4f}  "
              f"params {n_params:6d}  fit {seconds:5.1f}s")

    t0 = time.time()
    zero = ZeroOrderPredictor(fit_zero_order(train, playlist))
    record("zero-order", zero, int(zero.table.probs.size), time.time() - t0)

    t0 = time.time()
    mc = MarkovPredictor(fit_markov(train, playlist))
    record("markov", mc, mc.model.n_parameters, time.time() - t0)

    t0 = time.time()
    pmc = MarkovPredictor(fit_markov(train, playlist, position_dependent=True, smoothing=1.0))
    record("markov-pos", pmc, pmc.model.n_parameters, time.time() - t0)

    config = FeatureConfig()
    pipeline = FeaturePipeline(playlist=playlist, config=config)
    pipeline.fit(train)
    matrices, labels = build_training_arrays(pipeline, train)
    train_config = TrainConfig(
        epochs=args.epochs,
        batch_size=16,
        learning_rate=args.learning_rate,
        seed=args.seed,
        validation_fraction=0.1,
        patience=5,
    )
    for family, kind in (
        ("mlp", ModelKind.MLP),
        ("lstm", ModelKind.LSTM),
        ("transformer", ModelKind.TRANSFORMER),
        ("encoder", ModelKind.ENCODER),
    ):
        t0 = time.time()
        model = make_model(kind, neural_config(family, config.input_dim, args), seed=args.seed)
        result = train_model(model, matrices, labels, train_config)
        predictor = NeuralPredictor(model=model, pipeline=pipeline, feasibility_mask=True)
        record(family, predictor, result.n_parameters, time.time() - t0)

    best = max(rows, key=lambda r: r[1])
    print(f"\nbest family: {best[0]} at {best[1]:.4f} "
          f"(ceiling {ceiling:.4f}, gap {ceiling - best[1]:+.4f})")

    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        path = write_csv(
            args.out / f"benchmark_{args.name}.csv",
            ["family", "hit_rate", "n_parameters", "fit_seconds"],
            [[f, repr(h), p, repr(round(s, 2))] for f, h, p, s in rows],
        )
        print(f"table written to {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
