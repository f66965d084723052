"""Per-trial features, the labelled feature table, and one-way ANOVA ranking."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import scipy.special

from .dsp import SignalError, find_modal_peaks, frf_accelerance, preprocess_trial
from .hammer import TrialRecord

logger = logging.getLogger(__name__)

TIME_FEATURES = (
    "mean", "std", "rms", "peak", "peak2peak", "crest_factor", "shape_factor",
    "impulse_factor", "clearance_factor", "skewness", "kurtosis",
)
MODE_FEATURES = tuple(f"wn{i}" for i in range(1, 7))
DAMPING_MODES = (3, 4, 6)
FREQ_FEATURES = MODE_FEATURES + tuple(f"zeta{i}" for i in DAMPING_MODES) + ("band_power", "mean_frequency")
FEATURE_NAMES = TIME_FEATURES + FREQ_FEATURES


class FeatureError(ValueError):
    pass


def time_features(series) -> dict[str, float]:
    """Statistical descriptors of one signal.

    std, skewness and kurtosis use population moments; kurtosis is not
    excess (Gaussian = 3).  Ratio features are NaN for an all-zero signal.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 8:
        raise FeatureError("need at least 8 samples")
    mean = float(np.mean(x))
    centred = x - mean
    m2 = float(np.mean(centred ** 2))
    std = math.sqrt(m2)
    rms = float(np.sqrt(np.mean(x ** 2)))
    absx = np.abs(x)
    peak = float(np.max(absx))
    mean_abs = float(np.mean(absx))
    mean_sqrt = float(np.mean(np.sqrt(absx)))
    nan = math.nan
    return {
        "mean": mean,
        "std": std,
        "rms": rms,
        "peak": peak,
        "peak2peak": float(np.max(x) - np.min(x)),
        "crest_factor": peak / rms if rms > 0 else nan,
        "shape_factor": rms / mean_abs if mean_abs > 0 else nan,
        "impulse_factor": peak / mean_abs if mean_abs > 0 else nan,
        "clearance_factor": peak / mean_sqrt ** 2 if mean_sqrt > 0 else nan,
        "skewness": float(np.mean(centred ** 3)) / m2 ** 1.5 if m2 > 0 else nan,
        "kurtosis": float(np.mean(centred ** 4)) / m2 ** 2 if m2 > 0 else nan,
    }


def freq_features(
    trial: TrialRecord,
    healthy_reference: Sequence[float],
    zero_pad: int = 4,
    half_band: float = 15.0,
    band_max: float = 1000.0,
) -> dict[str, float]:
    """Modal and spectral features of a preprocessed trial; missing peaks are NaN."""
    if len(healthy_reference) != 6:
        raise FeatureError("need six healthy reference frequencies")
    n_fft = zero_pad * len(trial.force)
    frf = frf_accelerance(trial.force, trial.acceleration, trial.sample_rate, n_fft, max_hz=band_max)
    peaks = find_modal_peaks(frf, healthy_reference, half_band)
    out = {}
    for p in peaks:
        out[f"wn{p.mode_index}"] = p.frequency if p.found else math.nan
    for i in DAMPING_MODES:
        p = peaks[i - 1]
        out[f"zeta{i}"] = p.damping_ratio if p.damping_resolved else math.nan
    power = np.abs(frf.accelerance) ** 2
    out["band_power"] = float(np.sum(power) * frf.resolution)
    out["mean_frequency"] = float(np.sum(frf.frequencies * power) / np.sum(power))
    return out


def trial_features(trial: TrialRecord, healthy_reference: Sequence[float], **kw) -> dict[str, float]:
    values = time_features(trial.acceleration)
    values.update(freq_features(trial, healthy_reference, **kw))
    return {name: values[name] for name in FEATURE_NAMES}


@dataclass
class FeatureTable:
    keys: list[tuple[str, int, int]]
    names: list[str]
    values: np.ndarray  # rows x features, NaN marks a missing value
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.keys), len(self.names))

    def __len__(self):
        return len(self.keys)

    @property
    def labels(self) -> np.ndarray:
        return np.array([k[0] for k in self.keys])

    @property
    def classes(self) -> list[str]:
        """Class labels in first-appearance order."""
        return list(dict.fromkeys(k[0] for k in self.keys))

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select(self, names: Sequence[str]) -> np.ndarray:
        missing = [n for n in names if n not in self.names]
        if missing:
            raise FeatureError(f"unknown features {missing}")
        return self.values[:, [self.names.index(n) for n in names]]

    def subset(self, rows) -> "FeatureTable":
        rows = np.asarray(rows)
        return FeatureTable([self.keys[i] for i in rows], list(self.names), self.values[rows], dict(self.provenance))


def build_feature_table(
    items: Iterable,
    healthy_reference: Sequence[float],
    params: Mapping | None = None,
    preprocess: bool = False,
    threads: int = 1,
    provenance: dict | None = None,
    max_skip_fraction: float = 0.05,
) -> FeatureTable:
    """One row per trial in (label, unit, trial) order.

    ``items`` holds TrialRecords or zero-argument loaders returning one.  A
    loader that raises is logged and skipped; more than ``max_skip_fraction``
    skipped rows abort the build.
    """
    params = dict(params or {})
    pre_kw = {k: params[k] for k in ("window", "cutoff", "order", "threshold") if k in params}
    feat_kw = {k: params[k] for k in ("zero_pad", "half_band", "band_max") if k in params}
    items = list(items)
    if not items:
        raise FeatureError("empty dataset")

    def work(item):
        try:
            trial = item() if callable(item) else item
        except (OSError, ValueError) as exc:
            return None, exc
        if preprocess:
            trial = preprocess_trial(trial, **pre_kw)
        return trial.key, trial_features(trial, healthy_reference, **feat_kw)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(it) for it in items]

    rows, skipped = [], 0
    for key, val in results:
        if key is None:
            skipped += 1
            logger.warning("skipping unreadable trial: %s", val)
            continue
        rows.append((key, val))
    if skipped > max_skip_fraction * len(items):
        raise FeatureError(f"{skipped} of {len(items)} trials unreadable; aborting")
    rows.sort(key=lambda r: r[0])
    keys = [r[0] for r in rows]
    values = np.array([[r[1][n] for n in FEATURE_NAMES] for r in rows])
    prov = dict(provenance or {})
    prov["n_skipped"] = skipped
    return FeatureTable(keys, list(FEATURE_NAMES), values, prov)


# --- ANOVA -------------------------------------------------------------------

@dataclass(frozen=True)
class AnovaStat:
    f_statistic: float
    p_value: float
    df_between: int
    df_within: int
    degenerate: bool = False  # zero within-class spread
    undefined: bool = False  # all values identical


def f_survival(f: float, df1: float, df2: float) -> float:
    """P(F > f) for the F distribution, via the regularised incomplete beta."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(scipy.special.betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)))


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaStat:
    """One-way ANOVA F = (SSB/df_b) / (SSW/df_w) across ``groups``."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise FeatureError("ANOVA needs at least 2 classes")
    if any(g.size < 2 for g in groups):
        raise FeatureError("every class needs at least 2 samples")
    n = sum(g.size for g in groups)
    k = len(groups)
    grand = float(np.mean(np.concatenate(groups)))
    ssb = float(sum(g.size * (np.mean(g) - grand) ** 2 for g in groups))
    ssw = float(sum(np.sum((g - np.mean(g)) ** 2) for g in groups))
    dfb, dfw = k - 1, n - k
    if ssw == 0:
        if ssb == 0:
            return AnovaStat(math.nan, math.nan, dfb, dfw, undefined=True)
        return AnovaStat(math.inf, 0.0, dfb, dfw, degenerate=True)
    F = (ssb / dfb) / (ssw / dfw)
    return AnovaStat(F, f_survival(F, dfb, dfw), dfb, dfw)


@dataclass
class AnovaResult:
    stats: dict[str, AnovaStat]
    ranking: list[str]  # ascending p, ties by descending F
    selected: list[str]  # ranking entries with p <= alpha
    excluded: dict[str, str]  # feature -> reason
    n_used: dict[str, int]
    alpha: float = 0.05


def rank_features(table: FeatureTable, alpha: float = 0.05, names: Sequence[str] | None = None) -> AnovaResult:
    """ANOVA of every feature across classes; rows missing a value are dropped per feature."""
    classes = table.classes
    if len(classes) < 2:
        raise FeatureError("ranking needs at least 2 classes")
    labels = table.labels
    stats, excluded, n_used = {}, {}, {}
    for name in names or table.names:
        col = table.column(name)
        groups = []
        for c in classes:
            v = col[labels == c]
            groups.append(v[np.isfinite(v)])
        n_used[name] = int(sum(g.size for g in groups))
        if any(g.size < 2 for g in groups):
            excluded[name] = "fewer than 2 valid values in some class"
            continue
        st = anova_oneway(groups)
        if st.undefined:
            excluded[name] = "constant feature"
            continue
        stats[name] = st
    order = sorted(stats, key=lambda n: (stats[n].p_value, -stats[n].f_statistic, n))
    selected = [n for n in order if stats[n].p_value <= alpha]
    return AnovaResult(stats, order, selected, excluded, n_used, alpha)
