"""ML4ML assessors: tree-family models, a linear regressor, and the
robust-accuracy baseline, with the repeated 3-fold CV protocol.

Everything is trained from scratch on top of numpy so predictions are a
pure function of (data order, seed) and assessors serialize to plain JSON.
Class 1 means "variant", class 0 "invariant".
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureVector
from .parallel import parallel_map
from .trace import SignalTrace
from .varmat import compute_variance_matrix  # noqa: F401  (re-exported for callers)

ASSESSOR_KINDS = ("tree", "forest", "adaboost", "linreg", "baseline")
ASSESSOR_FORMAT_VERSION = 1


@dataclass
class LabelledExample:
    """One repository model: its feature vector, binary label, and fold tag.

    ``phi`` carries the Eq.-1 robust accuracy when the trace had
    predictions; the baseline assessor trains on it instead of the vector.
    """

    vector: np.ndarray
    label: int
    model_id: str = ""
    fold_tag: str = "regular"  # or "holdout"
    phi: float | None = None

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64).ravel()
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class Assessor:
    """A trained classifier/regressor plus its decision threshold."""

    kind: str
    params: dict
    decision_threshold: float = 0.5


@dataclass
class CVReport:
    """Per-fold accuracies of the repeated CV protocol.

    ``mean``/``std`` are percentages aggregated over all repeats x folds
    (population std); ``fold_rows`` keeps the raw fractional accuracies.
    """

    algo: str
    repeats: int
    seed: int
    fold_rows: list[dict] = field(default_factory=list)
    mean: float = 0.0
    std: float = 0.0
    confusion: dict = field(default_factory=dict)
    holdout_warning: bool = False

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "algo": self.algo,
            "repeats": self.repeats,
            "seed": self.seed,
            "mean_accuracy_pct": self.mean,
            "std_accuracy_pct": self.std,
            "confusion": self.confusion,
            "holdout_warning": self.holdout_warning,
            "folds": self.fold_rows,
        }

    def folds_csv(self) -> str:
        lines = ["repeat,fold,n_test,accuracy"]
        for row in self.fold_rows:
            lines.append(
                f"{row['repeat']},{row['fold']},{row['n_test']},{row['accuracy']:.17g}"
            )
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# baseline (Eq.-1 robust accuracy + greedy threshold)


def robust_accuracy(trace: SignalTrace) -> float:
    """Fraction of objects classified consistently-and-correctly under every
    transformation: the per-object product of both-equal-and-correct flags
    over all non-identity transformations."""
    if trace.predictions is None or trace.truth is None:
        raise ValueError("trace has no predictions/truth; cannot compute robust accuracy")
    ok = np.all(trace.predictions == trace.truth[None, :], axis=0)
    return float(ok.mean())


def plain_accuracy(trace: SignalTrace) -> float:
    """Accuracy of the identity-transformation predictions."""
    if trace.predictions is None or trace.truth is None:
        raise ValueError("trace has no predictions/truth")
    center = trace.family.identity_index
    return float(np.mean(trace.predictions[center] == trace.truth))


def baseline_fit(train: list[tuple[float, int]]) -> Assessor:
    """Greedy threshold on robust accuracy: predict variant iff phi < t.

    Candidates are the midpoints of sorted distinct phi values plus the
    two always/never sentinels; ties pick the lowest threshold.
    """
    if not train:
        raise ValueError("empty training set")
    phis = np.array([p for p, _ in train], dtype=np.float64)
    labels = np.array([l for _, l in train], dtype=np.int64)
    distinct = np.unique(phis)
    candidates = [-math.inf]
    candidates.extend(((distinct[:-1] + distinct[1:]) / 2.0).tolist())
    candidates.append(math.inf)
    best_t, best_acc = None, -1.0
    for t in candidates:  # ascending, so strict > keeps the lowest threshold on ties
        acc = float(np.mean((phis < t).astype(np.int64) == labels))
        if acc > best_acc:
            best_t, best_acc = t, acc
    return Assessor(
        kind="baseline",
        params={"threshold": best_t, "train_accuracy": best_acc, "n_features": 1},
    )


# ---------------------------------------------------------------------------
# CART trees


def _gini_weighted(n1_left, n_left, n1_total, n_total):
    """Size-weighted child Gini impurity for every candidate cut, vectorized."""
    n_right = n_total - n_left
    n1_right = n1_total - n1_left
    p1l = n1_left / n_left
    p1r = n1_right / n_right
    gini_l = 1.0 - p1l**2 - (1.0 - p1l) ** 2
    gini_r = 1.0 - p1r**2 - (1.0 - p1r) ** 2
    return (n_left * gini_l + n_right * gini_r) / n_total


def _best_split(X, y, feature_ids):
    """Exhaustive midpoint search; ties go to the lowest feature index then
    the lowest threshold.  Returns (feature, threshold) or None."""
    n = y.size
    best = None
    best_score = math.inf
    for f in feature_ids:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        ys = y[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0] + 1  # left = first `cut` samples
        if cuts.size == 0:
            continue
        c1 = np.cumsum(ys)
        scores = _gini_weighted(c1[cuts - 1], cuts.astype(np.float64), c1[-1], float(n))
        i = int(np.argmin(scores))  # first minimum: lowest threshold
        if scores[i] < best_score:
            best_score = float(scores[i])
            cut = cuts[i]
            best = (int(f), float((xs[cut - 1] + xs[cut]) / 2.0))
    return best


def _grow_tree(X, y, rng=None, max_features=None):
    n1 = int(y.sum())
    n0 = int(y.size - n1)
    if n0 == 0 or n1 == 0 or y.size < 2:
        return {"leaf": [n0, n1]}
    d = X.shape[1]
    if max_features is None or max_features >= d:
        feature_ids = range(d)
    else:
        feature_ids = np.sort(rng.choice(d, size=max_features, replace=False))
    split = _best_split(X, y, feature_ids)
    if split is None:
        return {"leaf": [n0, n1]}  # duplicate vectors with conflicting labels
    f, thr = split
    mask = X[:, f] <= thr
    return {
        "feature": f,
        "threshold": thr,
        "left": _grow_tree(X[mask], y[mask], rng, max_features),
        "right": _grow_tree(X[~mask], y[~mask], rng, max_features),
    }


def _tree_leaf(node, x):
    while "leaf" not in node:
        node = node["left"] if x[node["feature"]] <= node["threshold"] else node["right"]
    return node["leaf"]


def _tree_label(node, x) -> int:
    n0, n1 = _tree_leaf(node, x)
    return 1 if n1 > n0 else 0  # tie resolves to invariant inside trees


def _examples_xy(train: list[LabelledExample]):
    if not train:
        raise ValueError("empty training set")
    X = np.vstack([ex.vector for ex in train])
    y = np.array([ex.label for ex in train], dtype=np.int64)
    return X, y


def train_tree(train: list[LabelledExample], seed: int = 0) -> Assessor:
    """Unrestricted CART: Gini impurity, grown until pure or size < 2."""
    X, y = _examples_xy(train)
    root = _grow_tree(X, y)
    return Assessor(kind="tree", params={"tree": root, "n_features": X.shape[1]})


def train_forest(
    train: list[LabelledExample],
    seed: int = 0,
    n_trees: int = 100,
    bootstrap: bool = True,
    max_features="sqrt",
) -> Assessor:
    """Bootstrap ensemble of CART trees with per-split feature draws.

    Each tree owns an RNG stream derived from (seed, tree index), so the
    forest is identical however the trees are scheduled.  ``bootstrap=False``
    with ``max_features=None`` and one tree reduces to ``train_tree``.
    """
    X, y = _examples_xy(train)
    d = X.shape[1]
    k = math.ceil(math.sqrt(d)) if max_features == "sqrt" else max_features

    def build(t: int):
        rng = np.random.default_rng([seed, t])
        idx = rng.integers(0, y.size, y.size) if bootstrap else np.arange(y.size)
        return _grow_tree(X[idx], y[idx], rng, k)

    trees = parallel_map(build, range(n_trees))
    return Assessor(
        kind="forest",
        params={
            "trees": trees,
            "n_features": d,
            "seed": seed,
            "tree_seeds": [[seed, t] for t in range(n_trees)],
            "bootstrap": bootstrap,
        },
    )


# ---------------------------------------------------------------------------
# AdaBoost over depth-1 stumps


def _best_stump(X, y, w):
    """Weighted-error-minimizing decision stump over all features/cuts.

    Both polarities are scanned; ties prefer the lowest feature index,
    lowest threshold, and the left=0/right=1 polarity, in that order.
    """
    best = None
    best_err = math.inf
    w1_total = float(w[y == 1].sum())
    w0_total = float(w[y == 0].sum())
    for f in range(X.shape[1]):
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs, ys, ws = x[order], y[order], w[order]
        cuts = np.nonzero(xs[1:] > xs[:-1])[0] + 1
        if cuts.size == 0:
            continue
        cw1 = np.cumsum(ws * (ys == 1))
        cw0 = np.cumsum(ws * (ys == 0))
        w1_left, w0_left = cw1[cuts - 1], cw0[cuts - 1]
        # polarity A: left -> 0, right -> 1; polarity B: the reverse
        err_a = w1_left + (w0_total - w0_left)
        err_b = w0_left + (w1_total - w1_left)
        for errs, left_label in ((err_a, 0), (err_b, 1)):
            i = int(np.argmin(errs))
            if errs[i] < best_err:
                best_err = float(errs[i])
                cut = cuts[i]
                best = {
                    "feature": int(f),
                    "threshold": float((xs[cut - 1] + xs[cut]) / 2.0),
                    "left": left_label,
                    "right": 1 - left_label,
                }
    return best, best_err


def _stump_predict(stump, X):
    side = X[:, stump["feature"]] <= stump["threshold"]
    return np.where(side, stump["left"], stump["right"])


def train_adaboost(train: list[LabelledExample], seed: int = 0, n_rounds: int = 50) -> Assessor:
    """Discrete (SAMME-style) AdaBoost over depth-1 stumps.

    Stops early on a perfect stump or once no stump beats chance; the
    weighted error is clamped away from {0, 1} before the log.
    """
    X, y = _examples_xy(train)
    w = np.full(y.size, 1.0 / y.size)
    stumps: list[dict] = []
    for _ in range(n_rounds):
        stump, err = _best_stump(X, y, w)
        if stump is None or err >= 0.5:
            break
        eps = min(max(err, 1e-10), 1.0 - 1e-10)
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        stump["alpha"] = alpha
        stumps.append(stump)
        h = _stump_predict(stump, X)
        agree = np.where(h == y, 1.0, -1.0)
        w = w * np.exp(-alpha * agree)
        w /= w.sum()
        if err <= 1e-10:
            break  # perfectly separated; further rounds cannot change anything
    if not stumps:
        # degenerate data: constant stump voting for the weighted majority
        majority = 1 if float(w[y == 1].sum()) >= 0.5 else 0
        stumps.append(
            {"feature": 0, "threshold": math.inf, "left": majority, "right": majority, "alpha": 1.0}
        )
    return Assessor(kind="adaboost", params={"stumps": stumps, "n_features": X.shape[1]})


# ---------------------------------------------------------------------------
# linear regression


def train_linreg(train: list[LabelledExample]) -> Assessor:
    """OLS of the label on the features, via jittered normal equations."""
    X, y = _examples_xy(train)
    A = np.hstack([np.ones((X.shape[0], 1)), X])
    gram = A.T @ A + 1e-8 * np.eye(A.shape[1])
    beta = np.linalg.solve(gram, A.T @ y.astype(np.float64))
    return Assessor(
        kind="linreg",
        params={
            "intercept": float(beta[0]),
            "coef": beta[1:].tolist(),
            "n_features": X.shape[1],
        },
    )


# ---------------------------------------------------------------------------
# prediction and serialization


def _as_values(vector) -> np.ndarray:
    if isinstance(vector, FeatureVector):
        return vector.values()
    return np.asarray(vector, dtype=np.float64).ravel()


def predict(assessor: Assessor, vector) -> tuple[int, float]:
    """(label, score) for one input; score is in [0, 1].

    Score-producing assessors label via the decision threshold, with the
    borderline score mapping to variant; a plain tree answers with its leaf
    majority (leaf ties resolve to invariant).
    """
    x = _as_values(vector)
    expected = assessor.params.get("n_features")
    if expected is not None and x.size != expected:
        raise ValueError(f"feature dimension mismatch: got {x.size}, expected {expected}")
    kind = assessor.kind
    if kind == "baseline":
        phi = float(x[0])
        label = int(phi < assessor.params["threshold"])
        return label, float(label)
    if kind == "tree":
        n0, n1 = _tree_leaf(assessor.params["tree"], x)
        return (1 if n1 > n0 else 0), n1 / (n0 + n1)
    if kind == "forest":
        votes = [_tree_label(t, x) for t in assessor.params["trees"]]
        score = float(np.mean(votes))
    elif kind == "adaboost":
        stumps = assessor.params["stumps"]
        total = sum(s["alpha"] for s in stumps)
        vote = sum(
            s["alpha"] for s in stumps
            if (x[s["feature"]] <= s["threshold"] and s["left"] == 1)
            or (x[s["feature"]] > s["threshold"] and s["right"] == 1)
        )
        score = vote / total
    elif kind == "linreg":
        raw = assessor.params["intercept"] + float(np.dot(assessor.params["coef"], x))
        score = min(max(raw, 0.0), 1.0)
    else:
        raise ValueError(f"unknown assessor kind {kind!r}")
    return int(score >= assessor.decision_threshold), score


def save_assessor(assessor: Assessor, path: str | Path) -> None:
    payload = {
        "format_version": ASSESSOR_FORMAT_VERSION,
        "kind": assessor.kind,
        "decision_threshold": assessor.decision_threshold,
        "params": assessor.params,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_assessor(path: str | Path) -> Assessor:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload["format_version"] != ASSESSOR_FORMAT_VERSION:
            raise ValueError(f"unsupported format_version {payload['format_version']!r}")
        kind = payload["kind"]
        if kind not in ASSESSOR_KINDS:
            raise ValueError(f"unknown assessor kind {kind!r}")
        return Assessor(
            kind=kind,
            params=payload["params"],
            decision_threshold=float(payload["decision_threshold"]),
        )
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"corrupt assessor file {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# cross-validation protocol


_TRAINERS = {
    "tree": lambda ex, seed, kw: train_tree(ex, seed),
    "forest": lambda ex, seed, kw: train_forest(ex, seed, **kw),
    "adaboost": lambda ex, seed, kw: train_adaboost(ex, seed, **kw),
    "linreg": lambda ex, seed, kw: train_linreg(ex),
}


def fit(repo: list[LabelledExample], algo: str, seed: int = 0, **kw) -> Assessor:
    """Train one assessor of the given kind on the whole repository."""
    if algo == "baseline":
        pairs = [(ex.phi, ex.label) for ex in repo]
        if any(p is None for p, _ in pairs):
            raise ValueError("baseline needs robust accuracy; traces lack predictions")
        return baseline_fit(pairs)
    if algo not in _TRAINERS:
        raise ValueError(f"unknown algo {algo!r}")
    return _TRAINERS[algo](repo, seed, kw)


def _example_input(ex: LabelledExample, algo: str):
    return np.array([ex.phi]) if algo == "baseline" else ex.vector


def cross_validate(
    repo: list[LabelledExample],
    algo: str,
    repeats: int = 10,
    seed: int = 0,
    **kw,
) -> CVReport:
    """Repeated 3-fold CV where hold-out models always form one fixed fold.

    The remaining (regular) models are split randomly in two per repeat;
    each fold serves once as the test set.  Without any hold-out tags the
    harness degrades to a plain random 3-fold split and flags the report.
    """
    if len({ex.label for ex in repo}) < 2:
        raise ValueError("training data has a single class")
    holdout = [ex for ex in repo if ex.fold_tag == "holdout"]
    regular = [ex for ex in repo if ex.fold_tag != "holdout"]
    warning = not holdout
    report = CVReport(algo=algo, repeats=repeats, seed=seed, holdout_warning=warning)
    accs = []
    confusion = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for rep in range(repeats):
        rng = np.random.default_rng([seed, rep])
        if warning:
            perm = rng.permutation(len(repo))
            folds = [list(part) for part in np.array_split(perm, 3)]
            pool = repo
        else:
            perm = rng.permutation(len(regular))
            half = len(regular) // 2
            folds = [list(range(len(regular), len(regular) + len(holdout)))]
            folds += [perm[:half].tolist(), perm[half:].tolist()]
            pool = regular + holdout
        for fold_i, test_idx in enumerate(folds):
            train_idx = [i for f, fold in enumerate(folds) if f != fold_i for i in fold]
            train_ex = [pool[i] for i in train_idx]
            test_ex = [pool[i] for i in test_idx]
            train_seed = int(np.random.SeedSequence([seed, rep, fold_i]).generate_state(1)[0])
            model = fit(train_ex, algo, seed=train_seed, **kw)
            hits = 0
            for ex in test_ex:
                label, _ = predict(model, _example_input(ex, algo))
                hits += int(label == ex.label)
                key = ("tp" if ex.label == 1 else "fp") if label == 1 else (
                    "fn" if ex.label == 1 else "tn"
                )
                confusion[key] += 1
            acc = hits / len(test_ex)
            accs.append(acc)
            report.fold_rows.append(
                {"repeat": rep, "fold": fold_i, "n_test": len(test_ex), "accuracy": acc}
            )
    accs = np.array(accs)
    report.mean = float(accs.mean() * 100.0)
    report.std = float(accs.std() * 100.0)
    report.confusion = confusion
    return report


# ---------------------------------------------------------------------------
# correlation analysis

#: (plane, feature) pairs reported against robust accuracy and accuracy.
CORRELATION_MEASUREMENTS = (
    ("Max@CONF", "svm"),
    ("Max@CONV-1", "svm"),
    ("Max@CONF", "dctny"),
    ("Max@CONV-1", "dctny"),
    ("Max@CONF", "g_overall"),
    ("Max@CONV-1", "g_overall"),
)


def _pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    sx, sy = x.std(), y.std()
    if sx == 0 or sy == 0:
        return 0.0, True
    r = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return r, False


def correlation_table(
    vectors: list[FeatureVector],
    phis: list[float],
    accuracies: list[float],
    measurements=CORRELATION_MEASUREMENTS,
) -> dict:
    """Pearson correlation of selected measurements against robust accuracy
    and plain accuracy across models; zero-variance columns report r=0 and
    are flagged."""
    if len(vectors) < 3:
        raise ValueError("need at least 3 models with predictions")
    phis = np.asarray(phis, dtype=np.float64)
    accuracies = np.asarray(accuracies, dtype=np.float64)
    columns, r_phi, r_acc, flags = [], [], [], []
    for plane, feat in measurements:
        col = np.array([v.value(plane, feat) for v in vectors])
        columns.append(f"{feat}@{plane}")
        r1, flag1 = _pearson(col, phis)
        r2, flag2 = _pearson(col, accuracies)
        r_phi.append(r1)
        r_acc.append(r2)
        flags.append(flag1 or flag2)
    return {
        "format_version": 1,
        "columns": columns,
        "robust_acc": r_phi,
        "accuracy": r_acc,
        "zero_variance_flags": flags,
        "n_models": len(vectors),
    }
