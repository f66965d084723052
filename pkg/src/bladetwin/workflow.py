"""Pipeline stages shared by the command line and the tests.

Every stage reads its inputs from and writes its outputs to a run
directory::

    <run>/dataset/          raw synthetic trials (datastore layout)
    <run>/preprocessed/     truncated and filtered trials
    <run>/features.csv      one row per trial
    <run>/anova.csv         feature, F, p, selected
    <run>/pairs.csv         pairwise-feature search, ranked
    <run>/split.json        train/test keys shared by every model
    <run>/models/<KIND>.json
    <run>/confusion_<KIND>.csv
    <run>/report.json
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datastore
from .config import PipelineParams, blade_study_from_dict, canonical_json, protocol_from_dict, read_json
from .dsp import preprocess_trial
from .features import FeatureTable, build_feature_table, rank_features
from .fem import BladeConfig, DamageSpec, apply_damage, modal_analysis
from .hammer import ProtocolSpec, synth_dataset
from .ml import (
    ConfusionMatrix,
    Normalizer,
    SplitSpec,
    TrainedModel,
    default_specs,
    evaluate,
    pairwise_feature_search,
    run_bench,
    split_indices,
    zscore_apply,
)

logger = logging.getLogger(__name__)

DEFAULT_TRAIN_FEATURES = ("wn3", "wn4")
DEFAULT_SEARCH_FEATURES = 6


class StageError(RuntimeError):
    """A stage input is missing or inconsistent."""


def _need(path: Path, what: str) -> Path:
    if not path.exists():
        raise StageError(f"missing {what}: {path}")
    return path


def healthy_reference(blade: BladeConfig) -> np.ndarray:
    """Healthy modes 1-6 of the model; the peak-search bands centre on these."""
    return modal_analysis(blade, 6).frequencies


def frequency_shifts(blade: BladeConfig, damages: Sequence[DamageSpec], n_modes: int = 6) -> dict[str, np.ndarray]:
    """Damaged minus healthy frequency for each damage, modes 1..n_modes."""
    base = modal_analysis(blade, n_modes).frequencies
    return {
        d.label: modal_analysis(apply_damage(blade, d), n_modes).frequencies - base
        for d in damages if d.label != "Healthy"
    }


# --- stages ------------------------------------------------------------------

def simulate(run: Path, blade, damages, protocol: ProtocolSpec, threads: int = 1) -> datastore.Manifest:
    out = Path(run) / "dataset"
    trials = synth_dataset(blade, damages, protocol, threads=threads)
    return datastore.write_dataset(out, trials, blade, damages, protocol)


def _dataset_configs(root: Path):
    blade, damages = blade_study_from_dict(read_json(_need(root / "blade.json", "blade config copy")))
    protocol = protocol_from_dict(read_json(_need(root / "protocol.json", "protocol config copy")))
    return blade, damages, protocol


def preprocess(run: Path, params: PipelineParams, threads: int = 1, source: Path | None = None) -> datastore.Manifest:
    src = Path(source) if source else Path(run) / "dataset"
    manifest = datastore.read_manifest(_need(src, "raw dataset"))
    if manifest.stage != "raw":
        raise StageError(f"{src} holds {manifest.stage} trials, expected raw")
    blade, damages, protocol = _dataset_configs(src)
    loaders = datastore.trial_loaders(src, manifest)

    def work(load):
        return preprocess_trial(
            load(), params.window_s, params.cutoff_hz, params.filter_order, params.onset_threshold
        )

    w = datastore.DatasetWriter(Path(run) / "preprocessed", blade, damages, protocol, "preprocessed",
                                params.to_dict())
    w.sample_rate = manifest.sample_rate
    batch = max(1, 4 * threads)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for i in range(0, len(loaders), batch):
                for t in pool.map(work, loaders[i:i + batch]):
                    w.add(t)
    else:
        for load in loaders:
            w.add(work(load))
    return w.finish()


def features(run: Path, params: PipelineParams, threads: int = 1, source: Path | None = None) -> FeatureTable:
    src = Path(source) if source else Path(run) / "preprocessed"
    manifest = datastore.read_manifest(_need(src, "preprocessed dataset"))
    blade, _, _ = _dataset_configs(src)
    ref = healthy_reference(blade)
    table = build_feature_table(
        datastore.trial_loaders(src, manifest),
        ref,
        params={
            "window": params.window_s, "cutoff": params.cutoff_hz, "order": params.filter_order,
            "threshold": params.onset_threshold, "zero_pad": params.zero_pad,
            "half_band": params.half_band_hz, "band_max": params.band_max_hz,
        },
        preprocess=manifest.stage == "raw",
        threads=threads,
        provenance={"healthy_reference_hz": ref.tolist(), "source": manifest.stage},
    )
    datastore.write_feature_table(Path(run) / "features.csv", table)
    return table


def rank(run: Path, alpha: float = 0.05):
    table = datastore.read_feature_table(_need(Path(run) / "features.csv", "feature table"))
    result = rank_features(table, alpha)
    datastore.write_anova(Path(run) / "anova.csv", result)
    return result


def _selected(run: Path) -> list[str]:
    rows = datastore.read_anova(_need(Path(run) / "anova.csv", "ANOVA table"))
    return [name for name, _, _, sel in rows if sel]


def search_pairs(run: Path, seed: int, n_features: int = DEFAULT_SEARCH_FEATURES, threads: int = 1):
    table = datastore.read_feature_table(_need(Path(run) / "features.csv", "feature table"))
    chosen = _selected(run)[:n_features]
    result = pairwise_feature_search(table, chosen, default_specs(seed), SplitSpec(seed=seed), threads=threads)
    kinds = [s.kind.value for s in default_specs(seed)]
    rows = [[s.pair[0], s.pair[1], *[s.accuracies[k] for k in kinds], s.best] for s in result.scores]
    datastore.write_csv(Path(run) / "pairs.csv", ["feature_a", "feature_b", *kinds, "best"], rows)
    return result


def _confusion_rows(cm: ConfusionMatrix):
    return [[c, *row] for c, row in zip(cm.classes, cm.counts.tolist())]


def train(run: Path, seed: int, feature_names: Sequence[str] = DEFAULT_TRAIN_FEATURES, threads: int = 1):
    """Fit the four classifiers on one stratified split; persists models and the split."""
    run = Path(run)
    table = datastore.read_feature_table(_need(run / "features.csv", "feature table"))
    split = split_indices(table.labels, SplitSpec(seed=seed))
    res = run_bench(table, feature_names, default_specs(seed), split=split, threads=threads)
    split_doc = {
        "seed": seed,
        "train_fraction": SplitSpec().train_fraction,
        "identity": split.identity,
        "train": [datastore.key_string(table.keys[i]) for i in split.train],
        "test": [datastore.key_string(table.keys[i]) for i in split.test],
    }
    datastore.atomic_write_text(run / "split.json", canonical_json(split_doc))
    for kind, model in res.models.items():
        doc = {
            "features": list(feature_names),
            "normalizer": res.normalizer.to_dict(),
            "split_identity": split.identity,
            "model": model.to_dict(),
        }
        datastore.atomic_write_text(run / "models" / f"{kind}.json", canonical_json(doc))
    return res


def evaluate_models(run: Path) -> dict[str, ConfusionMatrix]:
    """Re-load the persisted models and score them on the persisted test keys."""
    run = Path(run)
    table = datastore.read_feature_table(_need(run / "features.csv", "feature table"))
    split_doc = read_json(_need(run / "split.json", "split"))
    index = {datastore.key_string(k): i for i, k in enumerate(table.keys)}
    try:
        test_rows = np.array([index[k] for k in split_doc["test"]], dtype=int)
    except KeyError as exc:
        raise StageError(f"split references trial {exc.args[0]} absent from the feature table") from None
    out = {}
    model_dir = _need(run / "models", "trained models")
    for path in sorted(model_dir.glob("*.json")):
        doc = read_json(path)
        if doc["split_identity"] != split_doc["identity"]:
            raise StageError(f"{path.name} was trained on a different split")
        model = TrainedModel.from_dict(doc["model"])
        norm = Normalizer.from_dict(doc["normalizer"])
        X = table.select(doc["features"])[test_rows]
        ok = np.all(np.isfinite(X), axis=1)
        cm = evaluate(model, zscore_apply(norm, X[ok]), table.labels[test_rows][ok])
        kind = model.spec.kind.value
        out[kind] = cm
        datastore.write_csv(run / f"confusion_{kind}.csv", ["actual", *cm.classes], _confusion_rows(cm))
    if not out:
        raise StageError(f"no models in {model_dir}")
    return out


def write_report(run: Path, seed: int, params: PipelineParams, feature_names: Sequence[str]) -> dict:
    """Run summary: seeds, settings, split identity, accuracies and the top pairs."""
    run = Path(run)
    manifest = datastore.read_manifest(run / "dataset") if (run / "dataset").exists() else None
    split_doc = read_json(_need(run / "split.json", "split"))
    accuracies, hyper = {}, {}
    for path in sorted((run / "models").glob("*.json")):
        doc = read_json(path)
        kind = doc["model"]["kind"]
        hyper[kind] = doc["model"]["hyperparams"]
    for path in sorted(run.glob("confusion_*.csv")):
        header, rows = datastore.read_csv(path)
        counts = np.array([[int(v) for v in r[1:]] for r in rows])
        accuracies[path.stem.split("_", 1)[1]] = float(np.trace(counts) / counts.sum())
    top_pairs = []
    if (run / "pairs.csv").exists():
        header, rows = datastore.read_csv(run / "pairs.csv")
        for r in rows[:5]:
            top_pairs.append({"pair": [r[0], r[1]], **{h: float(v) for h, v in zip(header[2:], r[2:])}})
    selected = _selected(run) if (run / "anova.csv").exists() else []
    report = {
        "seed": seed,
        "master_seed": manifest.master_seed if manifest else None,
        "blade_digest": manifest.blade_digest if manifest else None,
        "protocol_digest": manifest.protocol_digest if manifest else None,
        "pipeline": params.to_dict(),
        "features": list(feature_names),
        "anova_selected": selected,
        "split": {"identity": split_doc["identity"], "n_train": len(split_doc["train"]),
                  "n_test": len(split_doc["test"]), "train_fraction": split_doc["train_fraction"]},
        "hyperparameters": hyper,
        "accuracy": accuracies,
        "top_pairs": top_pairs,
    }
    datastore.atomic_write_text(run / "report.json", canonical_json(report))
    return report


@dataclass
class PipelineOutcome:
    report: dict
    selected: list[str]
    confusion: dict[str, ConfusionMatrix]


def run_pipeline(
    run: Path,
    blade,
    damages,
    protocol: ProtocolSpec,
    params: PipelineParams = PipelineParams(),
    seed: int | None = None,
    threads: int = 1,
    feature_names: Sequence[str] = DEFAULT_TRAIN_FEATURES,
    n_search_features: int = DEFAULT_SEARCH_FEATURES,
) -> PipelineOutcome:
    """simulate -> preprocess -> features -> rank -> search-pairs -> train -> evaluate -> report."""
    run = Path(run)
    seed = protocol.master_seed if seed is None else seed
    simulate(run, blade, damages, protocol, threads)
    preprocess(run, params, threads)
    features(run, params, threads)
    ranking = rank(run)
    search_pairs(run, seed, n_search_features, threads)
    train(run, seed, feature_names, threads)
    confusion = evaluate_models(run)
    report = write_report(run, seed, params, feature_names)
    return PipelineOutcome(report, ranking.selected, confusion)
