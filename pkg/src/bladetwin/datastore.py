"""On-disk dataset layout: trial CSVs, manifests, feature tables and reports.

Layout of a dataset directory::

    <root>/manifest.json
    <root>/blade.json          copy of the blade study used
    <root>/protocol.json       copy of the test protocol
    <root>/<label>/unit<k>/trial<j>.csv

Every path stored in the manifest is relative to ``<root>``.  Floats are
written with ``repr`` so that reading them back gives the identical double.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import (
    ConfigError,
    blade_study_to_dict,
    canonical_json,
    damage_to_dict,
    digest,
    protocol_to_dict,
    read_json,
)
from .hammer import TrialRecord

TRIAL_HEADER = "time_s,force_n,accel_ms2"
MANIFEST_NAME = "manifest.json"
MANIFEST_SCHEMA = 1


class DataStoreError(ValueError):
    pass


class TrialParseError(DataStoreError):
    def __init__(self, path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = str(path)
        self.line = line


# --- atomic writes -----------------------------------------------------------

def atomic_write_text(path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


# --- trial CSV ---------------------------------------------------------------

def format_float(x: float) -> str:
    return repr(float(x))


def trial_to_csv(trial: TrialRecord) -> str:
    cols = (trial.time, trial.force, trial.acceleration)
    for name, c in zip(("time", "force", "acceleration"), cols):
        if not np.all(np.isfinite(c)):
            raise DataStoreError(f"trial {trial.key}: {name} contains NaN or Inf")
    lines = [TRIAL_HEADER]
    lines.extend(f"{t!r},{f!r},{a!r}" for t, f, a in zip(*(c.tolist() for c in cols)))
    return "\n".join(lines) + "\n"


def write_trial(path, trial: TrialRecord) -> None:
    atomic_write_text(path, trial_to_csv(trial))


def _parse_rows(path, lines: list[str]) -> np.ndarray:
    out = np.empty((len(lines), 3))
    for i, line in enumerate(lines):
        parts = line.split(",")
        lineno = i + 2
        if len(parts) != 3:
            raise TrialParseError(path, lineno, f"expected 3 fields, found {len(parts)}")
        try:
            row = [float(p) for p in parts]
        except ValueError:
            raise TrialParseError(path, lineno, f"not a number in {line!r}") from None
        if not all(math.isfinite(v) for v in row):
            raise TrialParseError(path, lineno, "NaN or Inf value")
        out[i] = row
    return out


def read_trial(path, label: str, unit_id: int, trial_id: int, sample_rate: float | None = None) -> TrialRecord:
    """Parse a trial CSV; the sample rate defaults to the inverse of the time step."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != TRIAL_HEADER:
        raise TrialParseError(path, 1, f"header must be {TRIAL_HEADER!r}")
    body = lines[1:]
    if not body:
        raise TrialParseError(path, 2, "no samples")
    data = None
    try:
        flat = np.array(",".join(body).split(","), dtype=float)
        if flat.size == 3 * len(body) and np.all(np.isfinite(flat)):
            data = flat.reshape(-1, 3)
    except ValueError:
        data = None
    if data is None:
        data = _parse_rows(path, body)  # slow path to locate the bad line
    if sample_rate is None:
        if len(data) < 2:
            raise TrialParseError(path, 2, "cannot infer the sample rate from one sample")
        sample_rate = float(round(1.0 / (data[1, 0] - data[0, 0]), 9))
    return TrialRecord(label, unit_id, trial_id, float(sample_rate), data[:, 0].copy(), data[:, 1].copy(),
                       data[:, 2].copy())


# --- manifest ----------------------------------------------------------------

def trial_relpath(label: str, unit_id: int, trial_id: int) -> str:
    return f"{label}/unit{unit_id}/trial{trial_id}.csv"


def key_string(key: tuple[str, int, int]) -> str:
    return f"{key[0]}/{key[1]}/{key[2]}"


def parse_key_string(s: str) -> tuple[str, int, int]:
    label, unit, trial = s.rsplit("/", 2)
    return label, int(unit), int(trial)


@dataclass
class Manifest:
    blade_digest: str
    protocol_digest: str
    classes: list[dict]  # {label, damage, n_units, n_trials}
    files: dict[str, str]  # "label/unit/trial" -> relative path
    file_digests: dict[str, str]
    master_seed: int
    sample_rate: float
    stage: str = "raw"  # raw | preprocessed
    params: dict = field(default_factory=dict)
    schema_version: int = MANIFEST_SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "stage": self.stage,
            "blade_digest": self.blade_digest,
            "protocol_digest": self.protocol_digest,
            "master_seed": self.master_seed,
            "sample_rate_hz": self.sample_rate,
            "classes": self.classes,
            "params": self.params,
            "files": self.files,
            "file_digests": self.file_digests,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Manifest":
        try:
            if d["schema_version"] != MANIFEST_SCHEMA:
                raise DataStoreError(f"unsupported manifest schema_version {d['schema_version']}")
            return cls(
                blade_digest=d["blade_digest"],
                protocol_digest=d["protocol_digest"],
                classes=list(d["classes"]),
                files=dict(d["files"]),
                file_digests=dict(d.get("file_digests", {})),
                master_seed=int(d["master_seed"]),
                sample_rate=float(d["sample_rate_hz"]),
                stage=d.get("stage", "raw"),
                params=dict(d.get("params", {})),
            )
        except KeyError as exc:
            raise DataStoreError(f"manifest: missing key {exc.args[0]!r}") from None

    def keys(self) -> list[tuple[str, int, int]]:
        return sorted(parse_key_string(k) for k in self.files)


def write_manifest(root, manifest: Manifest) -> None:
    atomic_write_text(Path(root) / MANIFEST_NAME, canonical_json(manifest.to_dict()))


def read_manifest(root) -> Manifest:
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        raise DataStoreError(f"{path}: no manifest")
    try:
        return Manifest.from_dict(read_json(path))
    except ConfigError as exc:
        raise DataStoreError(str(exc)) from exc


class DatasetWriter:
    """Collects trials into a dataset directory; the manifest lands last."""

    def __init__(self, root, blade, damages, protocol, stage: str = "raw", params: dict | None = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.damages = list(damages)
        self.protocol = protocol
        self.stage = stage
        self.params = dict(params or {})
        self.study = blade_study_to_dict(blade, self.damages)
        self.protocol_dict = protocol_to_dict(protocol)
        atomic_write_text(self.root / "blade.json", canonical_json(self.study))
        atomic_write_text(self.root / "protocol.json", canonical_json(self.protocol_dict))
        self.files: dict[str, str] = {}
        self.file_digests: dict[str, str] = {}
        self.sample_rate = protocol.sample_rate

    def add(self, trial: TrialRecord) -> str:
        rel = trial_relpath(*trial.key)
        text = trial_to_csv(trial)
        atomic_write_text(self.root / rel, text)
        k = key_string(trial.key)
        self.files[k] = rel
        self.file_digests[k] = hashlib.sha256(text.encode("utf-8")).hexdigest()
        return rel

    def finish(self) -> Manifest:
        per_label: dict[str, dict[int, int]] = {}
        for k in self.files:
            label, unit, _ = parse_key_string(k)
            per_label.setdefault(label, {}).setdefault(unit, 0)
            per_label[label][unit] += 1
        classes = []
        for d in self.damages:
            units = per_label.get(d.label, {})
            classes.append({
                "label": d.label,
                "damage": damage_to_dict(d),
                "n_units": len(units),
                "n_trials": max(units.values()) if units else 0,
            })
        manifest = Manifest(
            blade_digest=digest(self.study),
            protocol_digest=digest(self.protocol_dict),
            classes=classes,
            files=dict(sorted(self.files.items(), key=lambda kv: parse_key_string(kv[0]))),
            file_digests=dict(sorted(self.file_digests.items(), key=lambda kv: parse_key_string(kv[0]))),
            master_seed=self.protocol.master_seed,
            sample_rate=self.sample_rate,
            stage=self.stage,
            params=self.params,
        )
        write_manifest(self.root, manifest)
        return manifest


def write_dataset(root, trials: Iterable[TrialRecord], blade, damages, protocol,
                  stage: str = "raw", params: dict | None = None) -> Manifest:
    w = DatasetWriter(root, blade, damages, protocol, stage, params)
    for t in trials:
        w.add(t)
    return w.finish()


def trial_loaders(root, manifest: Manifest | None = None) -> list:
    """Zero-argument callables, one per trial, in (label, unit, trial) order."""
    root = Path(root)
    manifest = manifest or read_manifest(root)
    fs = manifest.sample_rate

    def loader(key, rel):
        return lambda: read_trial(root / rel, *key, sample_rate=fs)

    return [loader(k, manifest.files[key_string(k)]) for k in manifest.keys()]


@dataclass
class ValidationReport:
    ok: bool
    n_files: int
    problems: list[str]

    def __str__(self):
        head = f"{'OK' if self.ok else 'FAILED'}: {self.n_files} trial files"
        return "\n".join([head] + [f"  {p}" for p in self.problems])


def validate_dataset(root, blade_study: dict | None = None, protocol: dict | None = None,
                     check_contents: bool = True) -> ValidationReport:
    """Check existence, counts and digests; every problem is itemised.

    ``blade_study`` / ``protocol`` (dicts) are optionally compared with the
    digests recorded at generation time, in addition to the copies stored in
    the directory.
    """
    root = Path(root)
    problems: list[str] = []
    try:
        m = read_manifest(root)
    except (DataStoreError, OSError) as exc:
        return ValidationReport(False, 0, [f"manifest: {exc}"])
    for name, recorded, given in (
        ("blade.json", m.blade_digest, blade_study),
        ("protocol.json", m.protocol_digest, protocol),
    ):
        path = root / name
        if not path.is_file():
            problems.append(f"missing {name}")
        else:
            try:
                if digest(read_json(path)) != recorded:
                    problems.append(f"digest mismatch: {name} differs from the manifest")
            except ConfigError as exc:
                problems.append(f"{name}: {exc}")
        if given is not None and digest(given) != recorded:
            problems.append(f"digest mismatch: supplied {name.split('.')[0]} config differs from the manifest")
    counts: dict[str, dict[int, int]] = {}
    for k, rel in m.files.items():
        try:
            label, unit, trial = parse_key_string(k)
        except ValueError:
            problems.append(f"bad index key {k!r}")
            continue
        counts.setdefault(label, {}).setdefault(unit, 0)
        counts[label][unit] += 1
        if Path(rel).is_absolute() or ".." in Path(rel).parts:
            problems.append(f"non-relative path for ({label}, {unit}, {trial}): {rel}")
            continue
        path = root / rel
        if not path.is_file():
            problems.append(f"missing file for ({label}, {unit}, {trial}): {rel}")
        elif check_contents and k in m.file_digests and sha256_file(path) != m.file_digests[k]:
            problems.append(f"content digest mismatch for ({label}, {unit}, {trial}): {rel}")
    for c in m.classes:
        units = counts.get(c["label"], {})
        if len(units) != c["n_units"]:
            problems.append(f"class {c['label']}: manifest lists {c['n_units']} units, index has {len(units)}")
        for u, n in sorted(units.items()):
            if n != c["n_trials"]:
                problems.append(f"class {c['label']} unit {u}: expected {c['n_trials']} trials, index has {n}")
    extra = set(counts) - {c["label"] for c in m.classes}
    for label in sorted(extra):
        problems.append(f"index holds files for undeclared class {label}")
    return ValidationReport(not problems, len(m.files), problems)


# --- feature tables, ANOVA, generic CSV --------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataStoreError(f"{path}: empty file")
    header = lines[0].split(",")
    rows = []
    for i, line in enumerate(lines[1:], 2):
        parts = line.split(",")
        if len(parts) != len(header):
            raise DataStoreError(f"{path}:{i}: expected {len(header)} fields, found {len(parts)}")
        rows.append(parts)
    return header, rows


def write_feature_table(path, table) -> None:
    rows = ([k[0], k[1], k[2], *row] for k, row in zip(table.keys, table.values.tolist()))
    write_csv(path, ["label", "unit", "trial", *table.names], rows)


def read_feature_table(path):
    from .features import FeatureTable

    header, rows = read_csv(path)
    if header[:3] != ["label", "unit", "trial"]:
        raise DataStoreError(f"{path}:1: first columns must be label,unit,trial")
    try:
        keys = [(r[0], int(r[1]), int(r[2])) for r in rows]
        values = np.array([[float(v) for v in r[3:]] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataStoreError(f"{path}: {exc}") from None
    return FeatureTable(keys, header[3:], values.reshape(len(keys), len(header) - 3))


def write_anova(path, result) -> None:
    rows = [[n, result.stats[n].f_statistic, result.stats[n].p_value, n in result.selected] for n in result.ranking]
    rows += [[n, math.nan, math.nan, False] for n in sorted(result.excluded)]
    write_csv(path, ["feature", "F", "p", "selected"], rows)


def read_anova(path) -> list[tuple[str, float, float, bool]]:
    _, rows = read_csv(path)
    return [(r[0], float(r[1]), float(r[2]), r[3] == "true") for r in rows]
