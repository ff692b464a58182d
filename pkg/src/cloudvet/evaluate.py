"""Experimental protocol: benign/adversarial pair construction, pair-level
train/test splitting, accuracy and ROC/AUC metrics, greedy parameter search,
and the extraction timing benchmark."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import threadpoolctl

from .attacks import AttackSpec, apply_attack
from .classifier import (ADVERSARIAL, BENIGN, FldeConfig, ensemble_scores,
                         train_flde)
from .cloud import resample
from .errors import CloudVetError
from .features import PipelineParams, extract_feature_vector
from .geometry import extract_geometric

log = logging.getLogger(__name__)

MAX_PAIR_FAILURE_FRACTION = 0.10
SWEEP_ORDER = ("t_offset", "kg", "kv", "kc", "kn")


@dataclass(frozen=True)
class LabeledRow:
    vector: np.ndarray
    label: str
    pair_id: str
    source: str


@dataclass
class LabeledSet:
    """Feature rows with class labels and pair ids linking counterparts."""

    rows: list[LabeledRow]

    def vectors(self) -> np.ndarray:
        return np.vstack([r.vector for r in self.rows])

    def labels(self) -> list[str]:
        return [r.label for r in self.rows]

    def pair_ids(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.pair_id not in seen:
                seen.append(r.pair_id)
        return seen

    def by_label(self, label: str) -> np.ndarray:
        rows = [r.vector for r in self.rows if r.label == label]
        return np.vstack(rows) if rows else np.empty((0, 0))


@dataclass
class EvalReport:
    """Outcome of one detection experiment."""

    accuracy: float
    roc: np.ndarray
    auc: float
    train_seconds: float
    extract_seconds_per_cloud: float
    params: PipelineParams
    classifier_meta: dict


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from a tuple of integer parts."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _build_pair(index, cloud, attack, params, seed):
    spec = replace(attack, seed=derive_seed(attack.seed, index))
    features = None
    if spec.kind == "remove" and spec.mode == "highcurv":
        features = extract_geometric(cloud, params)
    adversarial = apply_attack(cloud, spec, features=features)
    benign = cloud
    if len(adversarial) != len(cloud):
        benign = resample(cloud, len(adversarial), seed=derive_seed(seed, index))
    pair_id = f"pair-{index:05d}"
    source = cloud.name or pair_id
    return [
        LabeledRow(vector=extract_feature_vector(benign, params), label=BENIGN,
                   pair_id=pair_id, source=source),
        LabeledRow(vector=extract_feature_vector(adversarial, params),
                   label=ADVERSARIAL, pair_id=pair_id, source=source),
    ]


def make_pairs(benign_clouds, attack: AttackSpec, params: PipelineParams,
               seed: int = 0, workers: int = 1) -> LabeledSet:
    """Build the labeled feature set of benign/adversarial pairs.

    Each benign cloud gets a per-index deterministic attack seed; when the
    attack changes the point count the benign twin is resampled to match
    before extraction, so the detector never sees a raw size cue. Pairs whose
    extraction fails are skipped with a warning; more than 10% failures abort.
    """
    benign_clouds = list(benign_clouds)
    if not benign_clouds:
        raise ValueError("need at least one benign cloud")

    def job(indexed):
        index, cloud = indexed
        try:
            return index, _build_pair(index, cloud, attack, params, seed), None
        except (CloudVetError, ValueError) as exc:
            return index, None, exc

    items = list(enumerate(benign_clouds))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, items))
    else:
        results = [job(it) for it in items]

    rows, failures = [], 0
    for index, pair_rows, exc in sorted(results, key=lambda r: r[0]):
        if exc is not None:
            failures += 1
            log.warning("skipping pair %d (%s): %s", index,
                        benign_clouds[index].name or "unnamed", exc)
            continue
        rows.extend(pair_rows)
    if failures > MAX_PAIR_FAILURE_FRACTION * len(benign_clouds):
        raise RuntimeError(
            f"{failures} of {len(benign_clouds)} pairs failed extraction "
            f"(> {MAX_PAIR_FAILURE_FRACTION:.0%}); aborting")
    return LabeledSet(rows=rows)


def split(labeled: LabeledSet, test_fraction: float, seed: int):
    """Pair-level train/test split: both members of a pair land on one side."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie strictly between 0 and 1")
    pair_ids = labeled.pair_ids()
    if len(pair_ids) < 2:
        raise ValueError("need at least 2 pairs to split")
    rng = np.random.default_rng(seed)
    shuffled = [pair_ids[i] for i in rng.permutation(len(pair_ids))]
    n_test = int(round(test_fraction * len(pair_ids)))
    n_test = min(max(n_test, 1), len(pair_ids) - 1)
    test_ids = set(shuffled[:n_test])
    train_rows = [r for r in labeled.rows if r.pair_id not in test_ids]
    test_rows = [r for r in labeled.rows if r.pair_id in test_ids]
    return LabeledSet(rows=train_rows), LabeledSet(rows=test_rows)


def accuracy(predictions, labels) -> float:
    predictions, labels = list(predictions), list(labels)
    if len(predictions) != len(labels):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    if not labels:
        raise ValueError("need at least one prediction")
    return sum(p == t for p, t in zip(predictions, labels)) / len(labels)


def _as_adversarial_mask(labels) -> np.ndarray:
    out = []
    for lb in labels:
        if isinstance(lb, str):
            out.append(lb == ADVERSARIAL)
        else:
            out.append(bool(lb))
    return np.asarray(out, dtype=bool)


def roc_auc(scores, labels):
    """ROC sweep over distinct score thresholds (descending) plus trapezoidal
    AUC. Tied scores collapse into one sweep step, which makes the AUC equal
    to the rank statistic P(adv > benign) + P(tie)/2."""
    scores = np.asarray(scores, dtype=np.float64)
    is_adv = _as_adversarial_mask(labels)
    if scores.shape[0] != is_adv.shape[0]:
        raise ValueError("scores and labels must have equal lengths")
    n_pos = int(is_adv.sum())
    n_neg = int(len(is_adv) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_adv = is_adv[order]
    tp = np.cumsum(sorted_adv)
    fp = np.cumsum(~sorted_adv)
    # keep only the last element of each tied block of scores
    last_of_block = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    tpr = tp[last_of_block] / n_pos
    fpr = fp[last_of_block] / n_neg
    points = [(0.0, 0.0)] + list(zip(fpr.tolist(), tpr.tolist()))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    roc = np.asarray(points)
    auc = float(np.trapezoid(roc[:, 1], roc[:, 0]))
    return roc, auc


@dataclass
class SearchGrids:
    """Per-parameter candidate lists for the greedy search."""

    t_offset: tuple
    kg: tuple
    kv: tuple
    kc: tuple
    kn: tuple

    def __post_init__(self):
        for name in SWEEP_ORDER:
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"grid for {name} must be nonempty")
            floor = 1 if name == "t_offset" else 3
            if any(v < floor for v in values):
                raise ValueError(f"grid values for {name} must be >= {floor}")
            object.__setattr__(self, name, values)


def _evaluate_params(benign_clouds, attack, params, seed, flde_config,
                     test_fraction, workers):
    labeled = make_pairs(benign_clouds, attack, params, workers=workers)
    train_set, test_set = split(labeled, test_fraction, seed)
    model = train_flde(train_set.by_label(ADVERSARIAL), train_set.by_label(BENIGN),
                       flde_config)
    scores = ensemble_scores(model, test_set.vectors())
    predicted = [ADVERSARIAL if s > 0.5 else BENIGN for s in scores]
    return accuracy(predicted, test_set.labels()), model, scores, test_set


def greedy_param_search(benign_clouds, attack: AttackSpec, init: PipelineParams,
                        grids: SearchGrids, seed: int = 0,
                        flde_config: FldeConfig | None = None,
                        test_fraction: float = 0.1, workers: int = 1):
    """Five sequential sweeps (t_offset, kg, kv, kc, kn), each fixing earlier
    winners and holding later parameters at their initial values.

    Every candidate is evaluated by test accuracy under a fresh pair build and
    the same split seed; ties go to the smaller parameter value. Returns the
    winning parameters and the full (params, accuracy) evaluation trace.
    """
    flde_config = flde_config or FldeConfig()
    current = init
    trace = []
    for name in SWEEP_ORDER:
        best_value, best_accuracy = None, -1.0
        for value in sorted(set(getattr(grids, name))):
            candidate = replace(current, **{name: value})
            acc, _, _, _ = _evaluate_params(benign_clouds, attack, candidate, seed,
                                            flde_config, test_fraction, workers)
            trace.append((candidate, acc))
            if acc > best_accuracy:
                best_value, best_accuracy = value, acc
        current = replace(current, **{name: best_value})
    return current, trace


def bench_timing(clouds, params: PipelineParams, warmup: int = 1):
    """Wall-clock seconds per cloud for feature extraction, single-threaded.

    File IO and classification are excluded; optional warmup runs (untimed)
    let the linear-algebra backend settle before measuring.
    """
    clouds = list(clouds)
    if not clouds:
        raise ValueError("need at least one cloud to benchmark")
    per_cloud = []
    with threadpoolctl.threadpool_limits(limits=1):
        for _ in range(warmup):
            extract_feature_vector(clouds[0], params)
        for cloud in clouds:
            start = time.perf_counter()
            extract_feature_vector(cloud, params)
            per_cloud.append(time.perf_counter() - start)
    return float(np.mean(per_cloud)), per_cloud


def run_experiment(benign_clouds, attack: AttackSpec, params: PipelineParams,
                   flde_config: FldeConfig | None = None,
                   test_fraction: float = 0.1, split_seed: int = 0,
                   workers: int = 1):
    """Full protocol: pair build, pair-level split, ensemble training, and test
    metrics. Returns (EvalReport, model, test LabeledSet)."""
    flde_config = flde_config or FldeConfig()
    benign_clouds = list(benign_clouds)
    started = time.perf_counter()
    labeled = make_pairs(benign_clouds, attack, params, workers=workers)
    extract_seconds = (time.perf_counter() - started) / max(len(labeled.rows), 1)

    train_set, test_set = split(labeled, test_fraction, split_seed)
    started = time.perf_counter()
    model = train_flde(train_set.by_label(ADVERSARIAL), train_set.by_label(BENIGN),
                       flde_config, params_snapshot=_params_dict(params))
    train_seconds = time.perf_counter() - started

    scores = ensemble_scores(model, test_set.vectors())
    predicted = [ADVERSARIAL if s > 0.5 else BENIGN for s in scores]
    acc = accuracy(predicted, test_set.labels())
    roc, auc = roc_auc(scores, test_set.labels())
    report = EvalReport(
        accuracy=acc, roc=roc, auc=auc, train_seconds=train_seconds,
        extract_seconds_per_cloud=extract_seconds, params=params,
        classifier_meta={
            "learners": len(model.learners),
            "d_sub": model.d_sub,
            "oob_error": model.oob_error,
            "seed": model.seed,
        })
    return report, model, test_set


def _params_dict(params: PipelineParams) -> dict:
    return {
        "t_offset": params.t_offset, "kg": params.kg, "kv": params.kv,
        "kc": params.kc, "kn": params.kn,
        "log_epsilon": params.log_epsilon, "moment_epsilon": params.moment_epsilon,
    }
