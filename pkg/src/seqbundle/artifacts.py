"""On-disk run artifacts: predictor bundles, stored splits, and manifests.

A predictor bundle is a directory holding model.json plus, for the neural
families, a weights.bin/weights.json checkpoint pair. Baseline models are
small enough to live inside model.json directly.

Nothing here embeds wall-clock time; reruns with the same inputs produce the
same bytes, and manifests carry content digests so that can be checked.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Mapping

from .baselines import (
    MarkovPredictor,
    ZeroOrderPredictor,
    ZeroOrderTable,
    baseline_from_json,
    markov_to_json,
    zero_order_to_json,
)
from .dataio import Dataset, FeaturePipeline, Split
from .domain import Playlist
from .errors import SchemaError
from .neuralkit import load_checkpoint, save_checkpoint
from .reports import write_json
from .seqmodels import (
    NeuralPredictor,
    config_from_json,
    config_to_json,
    make_model,
)

BUNDLE_FILE = "model.json"
WEIGHTS_STEM = "weights"


def sha256_file(path: Path | str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# split persistence


def save_split(path: Path | str, dataset: Dataset) -> Path:
    """Record each session's split tag so later runs score the same holdout."""
    assignment = {
        session.session_id: tag.value
        for session, tag in zip(dataset.sessions, dataset.split_tags)
    }
    return write_json(Path(path), {"session_splits": assignment})


def load_split(path: Path | str, dataset: Dataset) -> Dataset:
    """Re-tag a dataset from a stored split file.

    Every session must be covered; a dataset that drifted since the split was
    stored is an error, not a silent re-split.
    """
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        assignment = obj["session_splits"]
    except KeyError:
        raise SchemaError(f"{path}: not a split file (no session_splits)") from None
    tags = []
    for session in dataset.sessions:
        tag = assignment.get(session.session_id)
        if tag is None:
            raise SchemaError(
                f"{path}: session {session.session_id!r} has no stored split tag"
            )
        tags.append(Split(tag))
    extra = set(assignment) - {s.session_id for s in dataset.sessions}
    if extra:
        raise SchemaError(
            f"{path}: split file covers unknown sessions, e.g. {sorted(extra)[0]!r}"
        )
    return Dataset(
        playlists=dataset.playlists, sessions=dataset.sessions, split_tags=tuple(tags)
    )


# ---------------------------------------------------------------------------
# predictor bundles


def save_predictor(bundle_dir: Path | str, predictor) -> Path:
    """Write a predictor bundle; returns the bundle directory."""
    bundle_dir = Path(bundle_dir)
    bundle_dir.mkdir(parents=True, exist_ok=True)
    if isinstance(predictor, MarkovPredictor):
        payload = {"family": "baseline", "payload": markov_to_json(predictor.model)}
    elif isinstance(predictor, ZeroOrderPredictor):
        payload = {"family": "baseline", "payload": zero_order_to_json(predictor.table)}
    elif isinstance(predictor, NeuralPredictor):
        arrays = predictor.model.param_arrays()
        save_checkpoint(bundle_dir / WEIGHTS_STEM, arrays)
        payload = {
            "family": "neural",
            "model": config_to_json(predictor.model.kind, predictor.model.config),
            "pipeline": predictor.pipeline.to_jsonable(),
            "feasibility_mask": predictor.feasibility_mask,
        }
    else:
        raise SchemaError(f"cannot serialize predictor type {type(predictor).__name__}")
    write_json(bundle_dir / BUNDLE_FILE, payload)
    return bundle_dir


def load_predictor(bundle_dir: Path | str, playlist: Playlist):
    """Load a predictor bundle written by save_predictor."""
    bundle_dir = Path(bundle_dir)
    with open(bundle_dir / BUNDLE_FILE, encoding="utf-8") as fh:
        obj = json.load(fh)
    family = obj.get("family")
    if family == "baseline":
        model = baseline_from_json(obj["payload"])
        if isinstance(model, ZeroOrderTable):
            return ZeroOrderPredictor(table=model)
        return MarkovPredictor(model=model)
    if family == "neural":
        kind, config = config_from_json(obj["model"])
        model = make_model(kind, config, seed=0)
        model.set_param_arrays(load_checkpoint(bundle_dir / WEIGHTS_STEM))
        pipeline = FeaturePipeline.from_jsonable(obj["pipeline"], playlist)
        return NeuralPredictor(
            model=model,
            pipeline=pipeline,
            feasibility_mask=bool(obj.get("feasibility_mask", False)),
        )
    raise SchemaError(f"{bundle_dir / BUNDLE_FILE}: unknown bundle family {family!r}")


# ---------------------------------------------------------------------------
# run manifests


def write_manifest(
    path: Path | str,
    command: str,
    parameters: Mapping,
    input_files: Mapping[str, Path | str] | None = None,
    output_files: Mapping[str, Path | str] | None = None,
) -> Path:
    """Describe a run: the command, its parameters, and file digests.

    Paths are recorded relative to the manifest's directory when possible so
    a moved artifact directory stays self-consistent.
    """
    path = Path(path)
    base = path.parent

    def describe(files: Mapping[str, Path | str] | None) -> dict:
        out = {}
        for name, p in (files or {}).items():
            p = Path(p)
            try:
                shown = str(p.relative_to(base))
            except ValueError:
                shown = str(p)
            out[name] = {"path": shown, "sha256": sha256_file(p)}
        return out

    payload = {
        "command": command,
        "parameters": dict(parameters),
        "inputs": describe(input_files),
        "outputs": describe(output_files),
    }
    return write_json(path, payload)
