import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from ivtest.trace import CANONICAL_PLANES, SignalTrace, TransformationFamily


def family_of(n1: int, kind: str = "rotation") -> TransformationFamily:
    k = n1 // 2
    return TransformationFamily(kind=kind, v_values=tuple(float(i) for i in range(-k, k + 1)))


def make_trace(
    signals: dict,
    model_id: str = "t",
    predictions=None,
    truth=None,
    num_classes=None,
    labels=None,
    metadata=None,
) -> SignalTrace:
    """Build a trace directly from plane arrays; infers family and m."""
    first = next(iter(signals.values()))
    arr = np.asarray(first)
    return SignalTrace(
        model_id=model_id,
        family=family_of(arr.shape[0]),
        m=arr.shape[1],
        signals={k: np.asarray(v, dtype=np.float32) for k, v in signals.items()},
        predictions=predictions,
        truth=truth,
        num_classes=num_classes,
        labels=labels or {},
        metadata=metadata or {},
    )


def random_trace(rng: np.random.Generator, n1: int = 5, m: int = 8, planes=None) -> SignalTrace:
    planes = planes or [("CONF", "max")]
    signals = {key: rng.normal(size=(n1, m)).astype(np.float32) for key in planes}
    return make_trace(signals, model_id="rnd")


def full_random_trace(rng: np.random.Generator, n1: int = 5, m: int = 8) -> SignalTrace:
    return random_trace(rng, n1, m, planes=list(CANONICAL_PLANES))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
