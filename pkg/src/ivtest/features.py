"""The 16 variance-matrix measurements and the 80-dim feature vector.

Every measurement is a scalar function of one (n+1)x(n+1) variance matrix.
Index conventions follow the matrix orientation where the "meaningful"
cells are the strict lower triangle (i > j); the diagonal is the
self-comparison and the upper triangle its mirror.  All standard
deviations are population ones (divide by the count), matching the
explicit normalization constants in the measurement definitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trace import CANONICAL_PLANES, SignalTrace, TraceError, plane_label
from .varmat import VarianceMatrix, compute_variance_matrix, subsample_objects

#: Canonical measurement order within one plane.
FEATURE_NAMES = (
    "svm",
    "mean",
    "std",
    "asv",
    "ssty",
    "hg_mean",
    "hg_std",
    "hg_rstd",
    "vg_mean",
    "vg_std",
    "vg_cstd",
    "dg_mean",
    "dg_std",
    "g_overall",
    "dctny",
    "asymm",
)


@dataclass(frozen=True)
class FeatureConfig:
    """Knobs shared by all feature extraction: significance threshold tau,
    sensitivity subsample percentage r, and the seed of that subsample."""

    tau: float = 0.15
    r: float = 90.0
    sensitivity_seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0 < self.r < 100:
            raise ValueError(f"r must be in (0, 100), got {self.r}")


@dataclass
class FeatureVector:
    """80 named measurements: 16 features on each of the 5 canonical planes.

    ``entries`` is ordered plane-major: all 16 features of Max@CONF first,
    then Max@CONV-1, and so on.
    """

    entries: list[tuple[str, str, float]]  # (feature_name, plane, value)
    model_id: str

    def values(self) -> np.ndarray:
        return np.array([v for _, _, v in self.entries], dtype=np.float64)

    def names(self) -> list[str]:
        return [f"{plane}:{feat}" for feat, plane, _ in self.entries]

    def value(self, plane: str, feature: str) -> float:
        for feat, pl, v in self.entries:
            if pl == plane and feat == feature:
                return v
        raise KeyError(f"{plane}:{feature}")


def _delta(matrix) -> np.ndarray:
    return matrix.delta if isinstance(matrix, VarianceMatrix) else np.asarray(matrix, dtype=np.float64)


def _meaningful(d: np.ndarray) -> np.ndarray:
    """Strict lower triangle, the non-duplicated off-diagonal cells."""
    return d[np.tril_indices(d.shape[0], k=-1)]


def basic_stats(matrix) -> tuple[float, float, float]:
    """(squared-value mean over all cells, mean and std over meaningful cells)."""
    d = _delta(matrix)
    n1 = d.shape[0]
    svm = float((d**2).sum() / (2 * n1**2))
    vals = _meaningful(d)
    return svm, float(vals.mean()), float(vals.std())


def significant_variance(matrix, cfg: FeatureConfig) -> float:
    """Fraction of meaningful cells strictly above the tau threshold."""
    vals = _meaningful(_delta(matrix))
    return float(np.mean(vals > cfg.tau))


def sensitivity(matrix_full, matrix_sub) -> float:
    """Mean squared cell difference between the full and r% matrices."""
    d_full, d_sub = _delta(matrix_full), _delta(matrix_sub)
    if d_full.shape != d_sub.shape:
        raise ValueError(f"matrix shape mismatch: {d_full.shape} vs {d_sub.shape}")
    return float(np.mean((_meaningful(d_full) - _meaningful(d_sub)) ** 2))


def fill_diagonal(d: np.ndarray) -> np.ndarray:
    """Replace each diagonal cell by the average of its horizontal neighbours.

    The diagonal records self-comparisons (always zero) which would fake a
    dip in every gradient pass; corners have a single neighbour.  Applied
    once, before all three gradient directions.
    """
    out = d.copy()
    n = d.shape[0] - 1
    out[0, 0] = d[0, 1]
    out[n, n] = d[n, n - 1]
    for i in range(1, n):
        out[i, i] = (d[i, i - 1] + d[i, i + 1]) / 2.0
    return out


def _ratio(mean: float, std: float) -> float:
    # a perfectly uniform gradient field carries no irregularity signal
    return mean / std if std > 0 else 0.0


def gradient_features(matrix) -> dict[str, float]:
    """The nine gradient measurements (horizontal/vertical/diagonal passes).

    Valid index ranges per direction:
      horizontal  e[i,j] = d[i,j-1] - d[i,j]    i=1..n, j=1..i
      vertical    e[i,j] = d[i+1,j] - d[i,j]    j=0..n-1, i=j..n-1
      diagonal    e[i,j] = d[i+1,j-1] - d[i,j]  i=1..n-1, j=1..i
    """
    d = _delta(matrix)
    n = d.shape[0] - 1
    if n < 2:
        raise ValueError("gradient features need n >= 2")
    df = fill_diagonal(d)

    # horizontal pass: rows i=1..n, within-row cells j=1..i
    hg_rows = [df[i, 0:i] - df[i, 1 : i + 1] for i in range(1, n + 1)]
    hg_vals = np.concatenate(hg_rows)
    hg_mean, hg_std = float(hg_vals.mean()), float(hg_vals.std())
    hg_rstd = float(np.mean([row.std() for row in hg_rows]))

    # vertical pass: columns j=0..n-1, within-column cells i=j..n-1
    ev = df[1:, :] - df[:-1, :]
    vg_cols = [ev[j:n, j] for j in range(n)]
    vg_vals = np.concatenate(vg_cols)
    vg_mean, vg_std = float(vg_vals.mean()), float(vg_vals.std())
    vg_cstd = float(np.mean([col.std() for col in vg_cols]))

    # diagonal pass: i=1..n-1, j=1..i
    dg_vals = np.concatenate([df[i + 1, 0:i] - df[i, 1 : i + 1] for i in range(1, n)])
    dg_mean, dg_std = float(dg_vals.mean()), float(dg_vals.std())

    g_overall = (_ratio(hg_mean, hg_std) + _ratio(vg_mean, vg_std) + _ratio(dg_mean, dg_std)) / 3.0
    return {
        "hg_mean": hg_mean,
        "hg_std": hg_std,
        "hg_rstd": hg_rstd,
        "vg_mean": vg_mean,
        "vg_std": vg_std,
        "vg_cstd": vg_cstd,
        "dg_mean": dg_mean,
        "dg_std": dg_std,
        "g_overall": g_overall,
    }


def discontinuity(matrix, mean: float) -> float:
    """Within-band squared deviation of the sub-diagonals, scaled by the mean.

    A matrix that is constant along every off-diagonal band scores 0; a
    zero-mean matrix is defined to score 0 (it is perfectly flat).
    """
    if mean == 0:
        return 0.0
    d = _delta(matrix)
    n = d.shape[0] - 1
    total = 0.0
    for r in range(1, n):
        band = np.diagonal(d, offset=-r)
        total += float(band.var() * band.size)
    return total / mean


def asymmetry(matrix, mean: float) -> float:
    """Absolute asymmetry about the anti-diagonal, scaled by the mean."""
    if mean == 0:
        return 0.0
    d = _delta(matrix)
    reflected = d[::-1, ::-1].T  # reflected[i, j] = d[n-j, n-i]
    return float(np.abs(_meaningful(d) - _meaningful(reflected)).sum() / mean)


def sensitivity_matrix(trace: SignalTrace, matrix: VarianceMatrix, cfg: FeatureConfig) -> VarianceMatrix:
    """The r% companion matrix used by the sensitivity feature.

    The subsample is drawn from the same object population the matrix was
    built on, with one fixed seed, so all planes of one trace share it.
    """
    pool = matrix.objects
    size = trace.m if pool is None else len(pool)
    chosen = subsample_objects(size, cfg.r, cfg.sensitivity_seed, pool=pool)
    return compute_variance_matrix(trace, matrix.position, matrix.modality, object_subset=chosen)


def extract_all(matrix: VarianceMatrix, cfg: FeatureConfig, trace: SignalTrace) -> dict[str, float]:
    """All 16 measurements of one matrix, keyed in canonical order.

    The trace is needed only to recompute the r% subsample matrix behind
    the sensitivity feature.
    """
    svm, mean, std = basic_stats(matrix)
    out = {"svm": svm, "mean": mean, "std": std}
    out["asv"] = significant_variance(matrix, cfg)
    out["ssty"] = sensitivity(matrix, sensitivity_matrix(trace, matrix, cfg))
    out.update(gradient_features(matrix))
    out["dctny"] = discontinuity(matrix, mean)
    out["asymm"] = asymmetry(matrix, mean)
    return {name: out[name] for name in FEATURE_NAMES}


def assemble_vector(trace: SignalTrace, cfg: FeatureConfig | None = None) -> FeatureVector:
    """The 80-dim feature vector over the five canonical planes."""
    cfg = cfg or FeatureConfig()
    entries: list[tuple[str, str, float]] = []
    for pos, kind in CANONICAL_PLANES:
        label = plane_label(pos, kind)
        if (pos, kind) not in trace.signals:
            raise TraceError(f"missing plane {label}")
        matrix = compute_variance_matrix(trace, pos, kind)
        feats = extract_all(matrix, cfg, trace)
        entries.extend((name, label, feats[name]) for name in FEATURE_NAMES)
    return FeatureVector(entries=entries, model_id=trace.model_id)


def features_to_csv(vector: FeatureVector) -> str:
    """CSV per the feature-file contract: model_id,plane,feature,value."""
    lines = ["model_id,plane,feature,value"]
    for feat, plane, value in vector.entries:
        lines.append(f"{vector.model_id},{plane},{feat},{value:.17g}")
    return "\n".join(lines) + "\n"


def proposition1_check(trace: SignalTrace, pos, mod):
    """Square-mean identity: phi_svm equals pooled variance minus mean covariance.

    With plug-in estimators over the m objects both routes are the same
    algebraic quantity; returns (svm, var_minus_cov, abs_error).
    """
    matrix = compute_variance_matrix(trace, pos, mod)
    svm = basic_stats(matrix)[0]
    g = trace.plane(pos, mod)
    if g.shape[1] < 2:
        raise ValueError("need m >= 2 objects")
    m = g.shape[1]
    var_pooled = float(g.var())  # population variance over all (n+1)*m values
    mu = g.mean(axis=1)
    cross = (g @ g.T) / m  # cross[i, j] = mean_k g[i,k] g[j,k]
    cov_avg = float((cross - np.outer(mu, mu)).mean())
    rhs = var_pooled - cov_avg
    return svm, rhs, abs(svm - rhs)
