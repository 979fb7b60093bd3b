"""Variance matrices and their concentration diagnostics.

For a trace plane g[j][k] the pairwise difference of two transformations is
``dif_ij(x_k) = g[i][k] - g[j][k]``; the cross-object aggregator is the
root-mean-square ``delta_ij = sqrt(mean_k dif_ij(x_k)^2)``.  Collecting
delta over all transformation pairs yields the (n+1)x(n+1) variance matrix
that downstream feature extraction treats as an image.

Means here are population means (divide by the object count), matching the
expectation notation the aggregator is defined with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .trace import SignalTrace, _dif_kind, _pos_name


@dataclass
class VarianceMatrix:
    """Symmetric, zero-diagonal grid of delta values for one trace plane.

    ``objects`` records the object subset the matrix was aggregated over
    (None means all m), so that size-sensitivity features can resample
    consistently from the same population.
    """

    delta: np.ndarray
    position: str
    modality: str
    model_id: str
    m_used: int
    objects: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.delta.shape[0] - 1


def compute_dif(trace: SignalTrace, pos, mod, i: int, j: int) -> np.ndarray:
    """Per-object difference vector g[i][k] - g[j][k] (float64, length m)."""
    g = trace.plane(pos, mod)
    n = g.shape[0] - 1
    if not (0 <= i <= n and 0 <= j <= n):
        raise IndexError(f"transformation index out of range: i={i}, j={j}, n={n}")
    return g[i] - g[j]


def compute_variance_matrix(
    trace: SignalTrace, pos, mod, object_subset=None
) -> VarianceMatrix:
    """RMS-of-dif matrix over all transformation pairs.

    Each unordered pair is computed once and mirrored, so symmetry and the
    zero diagonal hold exactly, not merely within tolerance.
    """
    g = trace.plane(pos, mod)
    objects = None
    if object_subset is not None:
        objects = np.asarray(sorted(int(k) for k in object_subset), dtype=np.intp)
        if objects.size == 0:
            raise ValueError("object subset is empty")
        g = g[:, objects]
    # all-pairs squared dif, aggregated over objects
    sq = np.mean((g[:, None, :] - g[None, :, :]) ** 2, axis=2)
    lower = np.tril(np.sqrt(sq), k=-1)
    delta = lower + lower.T
    return VarianceMatrix(
        delta=delta,
        position=_pos_name(pos),
        modality=_dif_kind(mod),
        model_id=trace.model_id,
        m_used=g.shape[1],
        objects=objects,
    )


def subsample_objects(m: int, r: float, seed: int, pool=None) -> np.ndarray:
    """Seeded draw of floor(m*r/100) object indices without replacement.

    Indices are returned sorted so aggregation order (and therefore float
    rounding) does not depend on the draw order; r=100 reproduces the full
    index set exactly.
    """
    if not 0 < r <= 100:
        raise ValueError(f"r must be in (0, 100], got {r}")
    pool = np.arange(m, dtype=np.intp) if pool is None else np.asarray(pool, dtype=np.intp)
    count = math.floor(pool.size * r / 100)
    if count == 0:
        raise ValueError(f"subset would be empty: m={pool.size}, r={r}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=count, replace=False)
    chosen.sort()
    return chosen


def subsample_matrix(trace: SignalTrace, pos, mod, r: float, seed: int) -> VarianceMatrix:
    """Variance matrix over a seeded r% subsample of the test objects."""
    if not 0 < r < 100:
        raise ValueError(f"r must be in (0, 100), got {r}")
    chosen = subsample_objects(trace.m, r, seed)
    return compute_variance_matrix(trace, pos, mod, object_subset=chosen)


def hoeffding_bound(f_plus: float, m: int, epsilon: float) -> float:
    """Two-sided Hoeffding tail bound 2*exp(-2*m*eps^2 / f_plus^2), capped at 1."""
    if f_plus <= 0 or m < 1 or epsilon <= 0:
        raise ValueError("f_plus and epsilon must be positive, m >= 1")
    return min(1.0, 2.0 * math.exp(-2.0 * m * epsilon**2 / f_plus**2))


def observed_f_plus(trace: SignalTrace, pos, mod) -> float:
    """Observed upper bound of |dif| over the full trace plane.

    max_{i,j,k} |g[i][k] - g[j][k]| equals the per-object signal range.
    """
    g = trace.plane(pos, mod)
    return float(np.max(g.max(axis=0) - g.min(axis=0)))


def _mean_squared_dif(g: np.ndarray) -> np.ndarray:
    return np.mean((g[:, None, :] - g[None, :, :]) ** 2, axis=2)


def concentration_report(
    trace: SignalTrace,
    pos,
    mod,
    trials: int,
    r: float,
    seed: int,
    epsilon: float | None = None,
) -> dict:
    """Empirical concentration of the mean-of-squared-dif under subsampling.

    Runs ``trials`` seeded r% subsamples; for each, records the largest
    absolute deviation of the subsample mean-of-squared-dif from the
    full-trace value over all transformation pairs.  Deviation quantiles
    are reported next to the Hoeffding bound evaluated at those deviations;
    when ``epsilon`` is given, the empirical violation rate at that epsilon
    is reported against the bound's value.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    g = trace.plane(pos, mod)
    m = g.shape[1]
    full = _mean_squared_dif(g)
    f_plus = observed_f_plus(trace, pos, mod)
    deviations = np.empty(trials)
    m_sub = None
    for t in range(trials):
        chosen = subsample_objects(m, r, seed + t)
        m_sub = chosen.size
        sub = _mean_squared_dif(g[:, chosen])
        deviations[t] = np.max(np.abs(sub - full))
    quantiles = {
        "p50": float(np.quantile(deviations, 0.50)),
        "p90": float(np.quantile(deviations, 0.90)),
        "p99": float(np.quantile(deviations, 0.99)),
        "max": float(deviations.max()),
    }
    report = {
        "trials": trials,
        "r": r,
        "seed": seed,
        "m": m,
        "m_sub": int(m_sub),
        "f_plus": f_plus,
        "deviation_quantiles": quantiles,
        "hoeffding_at_quantiles": {
            name: hoeffding_bound(f_plus, m_sub, dev) if dev > 0 else 1.0
            for name, dev in quantiles.items()
        },
        "max_deviations": deviations.tolist(),
    }
    if epsilon is not None:
        report["epsilon"] = epsilon
        report["violation_rate"] = float(np.mean(deviations >= epsilon))
        report["bound_at_epsilon"] = hoeffding_bound(f_plus, m_sub, epsilon)
    return report


def proportion_sweep(trace: SignalTrace, pos, mod, proportions, seed: int, cfg=None):
    """Matrices plus their 16 features at each testing-data proportion.

    The 100% entry is the plain full-data matrix; smaller proportions use a
    seeded subsample (the same seed for every proportion).  Returns a list
    of ``(percent, VarianceMatrix, {feature: value})`` tuples.
    """
    from .features import FeatureConfig, extract_all

    cfg = cfg or FeatureConfig(sensitivity_seed=seed)
    out = []
    for p in proportions:
        p = float(p)
        if not 0 < p <= 100:
            raise ValueError(f"proportion must be in (0, 100], got {p}")
        if p == 100:
            matrix = compute_variance_matrix(trace, pos, mod)
        else:
            matrix = subsample_matrix(trace, pos, mod, p, seed)
        out.append((p, matrix, extract_all(matrix, cfg, trace)))
    return out


def proposition2_check(trace: SignalTrace, pos, mod, i: int, j: int):
    """Pairwise identity delta_ij^2/2 = (Var_i+Var_j)/2 + (mu_i-mu_j)^2/2 - Cov_ij.

    Stated with plug-in (divide-by-m) estimators, where it holds exactly;
    returns (lhs, rhs, abs_error).
    """
    g = trace.plane(pos, mod)
    if g.shape[1] < 2:
        raise ValueError("need m >= 2 objects")
    gi, gj = g[i], g[j]
    lhs = float(np.mean((gi - gj) ** 2) / 2.0)
    var_i, var_j = gi.var(), gj.var()
    mu_i, mu_j = gi.mean(), gj.mean()
    cov = float(np.mean(gi * gj) - mu_i * mu_j)
    rhs = float((var_i + var_j) / 2.0 + (mu_i - mu_j) ** 2 / 2.0 - cov)
    return lhs, rhs, abs(lhs - rhs)


def matrix_to_csv(matrix: VarianceMatrix) -> str:
    """All cells as ``i,j,delta`` rows, row-major."""
    d = matrix.delta
    lines = ["i,j,delta"]
    for i in range(d.shape[0]):
        for j in range(d.shape[1]):
            lines.append(f"{i},{j},{d[i, j]:.17g}")
    return "\n".join(lines) + "\n"


def matrix_to_f64(matrix: VarianceMatrix) -> bytes:
    """Row-major little-endian float64 payload."""
    return matrix.delta.astype("<f8").tobytes()
