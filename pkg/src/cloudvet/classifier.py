"""Fisher linear discriminant base learner and the random-subspace
majority-vote ensemble with out-of-bag model selection."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ModelFormatError
from .features import FEATURE_DIM

MODEL_VERSION = 1
BENIGN, ADVERSARIAL = "benign", "adversarial"


@dataclass
class FldBase:
    """One Fisher discriminant over a feature subspace.

    Votes "adversarial" when polarity * (w . x_sub - threshold) > 0.
    """

    subspace: np.ndarray
    weights: np.ndarray
    threshold: float
    polarity: int

    def votes(self, vectors: np.ndarray) -> np.ndarray:
        scores = vectors[:, self.subspace] @ self.weights
        return self.polarity * (scores - self.threshold) > 0.0


@dataclass
class FldeConfig:
    """Ensemble training knobs; all defaults are committed constants."""

    d_sub_grid: tuple | None = None
    l_max: int = 500
    seed: int = 0
    min_learners: int = 51
    stall_window: int = 25
    stall_tol: float = 0.005


@dataclass
class FldeModel:
    """Ensemble of Fisher discriminants scored by adversarial vote fraction."""

    learners: list[FldBase]
    d_sub: int
    feature_dim: int = FEATURE_DIM
    seed: int = 0
    oob_error: float = float("nan")
    params_snapshot: dict | None = None


def train_fld(pos, neg, subspace) -> FldBase:
    """Closed-form Fisher discriminant on a feature subspace.

    pos rows are the adversarial class, neg rows the benign class. Uses the
    summed within-class scatter with a trace-scaled ridge so rank-deficient
    scatters stay solvable; the threshold is the midpoint of the projected
    class means. If the class means coincide exactly the direction is
    arbitrary, so the first subspace axis is used to keep the weights nonzero.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if len(pos) < 2 or len(neg) < 2:
        raise ValueError("each class needs at least 2 samples")
    subspace = np.asarray(subspace, dtype=np.intp)
    dim = pos.shape[1]
    if subspace.ndim != 1 or len(subspace) == 0 or len(np.unique(subspace)) != len(subspace):
        raise ValueError("subspace must be a nonempty list of unique indices")
    if subspace.min() < 0 or subspace.max() >= dim:
        raise ValueError(f"subspace indices must lie in [0, {dim})")

    xp, xn = pos[:, subspace], neg[:, subspace]
    mu_p, mu_n = xp.mean(axis=0), xn.mean(axis=0)
    cp, cn = xp - mu_p, xn - mu_n
    scatter = cp.T @ cp + cn.T @ cn
    d_sub = len(subspace)
    trace = float(np.trace(scatter))
    gamma = 1e-6 * trace / d_sub if trace > 0.0 else 1e-6
    weights = np.linalg.solve(scatter + gamma * np.eye(d_sub), mu_p - mu_n)
    if not np.any(weights):
        weights = np.zeros(d_sub)
        weights[0] = 1.0
    proj_p, proj_n = float(weights @ mu_p), float(weights @ mu_n)
    threshold = (proj_p + proj_n) / 2.0
    polarity = 1 if proj_p >= proj_n else -1
    return FldBase(subspace=subspace, weights=weights, threshold=threshold,
                   polarity=polarity)


def default_d_sub_grid(feature_dim: int = FEATURE_DIM) -> tuple:
    grid = [d for d in range(5, feature_dim, 5)] + [feature_dim]
    return tuple(sorted(set(grid)))


def _learner_rng(seed: int, d_sub: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, d_sub, index]))


def _grow_ensemble(pos, neg, d_sub, config):
    """Grow one ensemble for a fixed subspace size, tracking out-of-bag error.

    Each learner draws an independent feature subspace and a per-class
    bootstrap; samples outside a learner's bootstrap vote out-of-bag. Growth
    stops at l_max learners, or once at least min_learners exist and the
    out-of-bag error moved less than stall_tol over the last stall_window
    learners.
    """
    n_pos, n_neg = len(pos), len(neg)
    dim = pos.shape[1]
    oob_votes_adv = np.zeros(n_pos + n_neg)
    oob_votes_all = np.zeros(n_pos + n_neg)
    is_adv = np.concatenate([np.ones(n_pos, bool), np.zeros(n_neg, bool)])
    stacked = np.vstack([pos, neg])

    learners = []
    history = []
    oob_error = float("nan")
    for index in range(config.l_max):
        rng = _learner_rng(config.seed, d_sub, index)
        subspace = np.sort(rng.choice(dim, size=d_sub, replace=False))
        bag_p = rng.integers(0, n_pos, size=n_pos)
        bag_n = rng.integers(0, n_neg, size=n_neg)
        learner = train_fld(pos[bag_p], neg[bag_n], subspace)
        learners.append(learner)

        out_p = np.setdiff1d(np.arange(n_pos), bag_p, assume_unique=False)
        out_n = np.setdiff1d(np.arange(n_neg), bag_n, assume_unique=False) + n_pos
        out = np.concatenate([out_p, out_n])
        if len(out):
            votes = learner.votes(stacked[out])
            oob_votes_adv[out] += votes
            oob_votes_all[out] += 1.0

        covered = oob_votes_all > 0
        if covered.any():
            majority_adv = oob_votes_adv[covered] > oob_votes_all[covered] / 2.0
            oob_error = float(np.mean(majority_adv != is_adv[covered]))
        history.append(oob_error)
        count = len(history)
        if count >= config.min_learners and count > config.stall_window:
            if abs(history[-1] - history[-1 - config.stall_window]) < config.stall_tol:
                break
    return learners, oob_error


def train_flde(pos, neg, config: FldeConfig | None = None,
               params_snapshot: dict | None = None) -> FldeModel:
    """Train the ensemble, selecting the subspace size by out-of-bag error.

    Every candidate subspace size in the grid grows its own ensemble; the one
    with the lowest final out-of-bag error wins (ties to the smaller size).
    Deterministic for a fixed config seed.
    """
    config = config or FldeConfig()
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if len(pos) < 10 or len(neg) < 10:
        raise ValueError("each class needs at least 10 samples to train the ensemble")
    if pos.shape[1] != neg.shape[1]:
        raise ValueError("class sample matrices disagree on feature dimension")
    dim = pos.shape[1]
    grid = config.d_sub_grid or default_d_sub_grid(dim)
    grid = tuple(sorted({int(d) for d in grid if 1 <= int(d) <= dim}))
    if not grid:
        raise ValueError("d_sub_grid contains no valid subspace sizes")

    best = None
    for d_sub in grid:
        learners, oob_error = _grow_ensemble(pos, neg, d_sub, config)
        if best is None or oob_error < best[0]:
            best = (oob_error, d_sub, learners)
    oob_error, d_sub, learners = best
    return FldeModel(learners=learners, d_sub=d_sub, feature_dim=dim,
                     seed=config.seed, oob_error=oob_error,
                     params_snapshot=params_snapshot)


def ensemble_scores(model: FldeModel, vectors) -> np.ndarray:
    """Adversarial vote fraction in [0, 1] for each row of vectors."""
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[1] != model.feature_dim:
        raise ValueError(
            f"expected feature dimension {model.feature_dim}, got {vectors.shape[1]}")
    votes = np.zeros(len(vectors))
    for learner in model.learners:
        votes += learner.votes(vectors)
    return votes / len(model.learners)


def predict(model: FldeModel, x) -> tuple[float, str]:
    """(score, label) for one feature vector; ties classify as benign."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.feature_dim,):
        raise ValueError(f"expected shape ({model.feature_dim},), got {x.shape}")
    score = float(ensemble_scores(model, x[None, :])[0])
    return score, (ADVERSARIAL if score > 0.5 else BENIGN)


def save_model(model: FldeModel) -> str:
    """Serialize a model to versioned JSON text; load_model inverts exactly."""
    payload = {
        "version": MODEL_VERSION,
        "feature_dim": model.feature_dim,
        "d_sub": model.d_sub,
        "seed": model.seed,
        "oob_error": model.oob_error,
        "params_snapshot": model.params_snapshot,
        "learners": [
            {
                "subspace": [int(i) for i in lr.subspace],
                "weights": [float(w) for w in lr.weights],
                "threshold": float(lr.threshold),
                "polarity": int(lr.polarity),
            }
            for lr in model.learners
        ],
    }
    return json.dumps(payload, indent=2) + "\n"


def load_model(text: str) -> FldeModel:
    """Parse and validate a model produced by save_model."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ModelFormatError("model JSON must be an object")
    version = payload.get("version")
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"unsupported model version {version!r} (expected {MODEL_VERSION})")
    try:
        feature_dim = int(payload["feature_dim"])
        d_sub = int(payload["d_sub"])
        raw_learners = payload["learners"]
        learners = []
        for raw in raw_learners:
            learners.append(FldBase(
                subspace=np.asarray(raw["subspace"], dtype=np.intp),
                weights=np.asarray(raw["weights"], dtype=np.float64),
                threshold=float(raw["threshold"]),
                polarity=int(raw["polarity"]),
            ))
        model = FldeModel(learners=learners, d_sub=d_sub, feature_dim=feature_dim,
                          seed=int(payload.get("seed", 0)),
                          oob_error=float(payload.get("oob_error", float("nan"))),
                          params_snapshot=payload.get("params_snapshot"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"model JSON missing or malformed field: {exc}") from exc
    _validate_model(model)
    return model


def _validate_model(model: FldeModel) -> None:
    if not model.learners:
        raise ModelFormatError("model has no learners")
    for lr in model.learners:
        if len(lr.subspace) != model.d_sub:
            raise ModelFormatError("learner subspace size disagrees with d_sub")
        if len(np.unique(lr.subspace)) != len(lr.subspace):
            raise ModelFormatError("learner subspace has duplicate indices")
        if lr.subspace.min() < 0 or lr.subspace.max() >= model.feature_dim:
            raise ModelFormatError("learner subspace index out of range")
        if lr.weights.shape != (model.d_sub,) or not np.any(lr.weights):
            raise ModelFormatError("learner weights missing or all zero")
        if lr.polarity not in (-1, 1):
            raise ModelFormatError("learner polarity must be +1 or -1")
