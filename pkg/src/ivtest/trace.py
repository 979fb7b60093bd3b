"""Signal-trace data model and the on-disk trace directory format.

A trace captures, for one model, the scalar signal summaries observed at a
few probed positions while a family of input transformations sweeps its
sampling variable across ``[-alpha, alpha]``.  Everything downstream
(variance matrices, features, assessors) consumes these traces.

Directory layout (format_version 1)::

    manifest.json                     metadata, family, plane inventory
    signals/<position>/<kind>.f32     little-endian float32, row-major [n+1][m]
    predictions.u16                   optional, little-endian uint16 [n+1][m]
    truth.u16                         optional, [m]

Signal payloads are stored as float32 for compactness; all downstream
arithmetic promotes to float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1

MAX = "max"
MEAN = "mean"
DIF_KINDS = (MAX, MEAN)

FAMILY_KINDS = ("rotation", "brightness", "scaling", "custom")

#: Plane order used for the 80-dim feature vector: (position, dif kind).
CANONICAL_PLANES = (
    ("CONF", MAX),
    ("CONV-1", MAX),
    ("CONV-1", MEAN),
    ("CONV-2", MAX),
    ("CONV-2", MEAN),
)


class TraceError(Exception):
    """Base class for trace construction and I/O errors."""


class ValidationError(TraceError):
    """A trace violates one of its invariants."""


class FormatError(TraceError):
    """An on-disk trace directory is malformed or unsupported."""


def plane_label(position: str, dif_kind: str) -> str:
    """Canonical human-readable plane name, e.g. ``Max@CONF``."""
    return f"{dif_kind.capitalize()}@{position}"


def parse_plane_label(label: str) -> tuple[str, str]:
    """Inverse of :func:`plane_label`; raises ValueError on bad input."""
    kind, sep, position = label.partition("@")
    if not sep or kind.lower() not in DIF_KINDS or not position:
        raise ValueError(f"bad plane label {label!r}; expected e.g. Max@CONF")
    return position, kind.lower()


@dataclass(frozen=True)
class TransformationFamily:
    """An odd-length, symmetric sweep of the sampling variable.

    ``v_values`` holds the sampling-variable value of each transformation
    (degrees for rotation, percent for brightness/scaling).  The middle
    entry must be exactly 0 (the identity transformation).
    """

    kind: str
    v_values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "v_values", tuple(float(v) for v in self.v_values))

    @property
    def n(self) -> int:
        """Largest transformation index; the family has n+1 members."""
        return len(self.v_values) - 1

    @property
    def identity_index(self) -> int:
        return len(self.v_values) // 2

    def violations(self) -> list[str]:
        out = []
        if self.kind not in FAMILY_KINDS:
            out.append(f"unknown family kind {self.kind!r}")
        v = np.asarray(self.v_values, dtype=np.float64)
        if v.size < 3 or v.size % 2 == 0:
            out.append("v_values length must be odd and >= 3")
            return out
        if not np.all(np.diff(v) > 0):
            out.append("v_values not strictly increasing")
        if v[v.size // 2] != 0.0:
            out.append("identity sample v=0 missing")
        if np.max(np.abs(v + v[::-1])) > 1e-9:
            out.append("v_values not symmetric about 0")
        return out


@dataclass(frozen=True)
class Position:
    """A probed location in the model (CONF, CONV-1, CONV-2, ...)."""

    name: str
    index: int = 0


@dataclass(frozen=True)
class Modality:
    """A (dif, cml) pair naming how signal sets become measurements."""

    dif_kind: str
    cml_kind: str = "rms_expectation"


def _pos_name(pos) -> str:
    return pos.name if isinstance(pos, Position) else str(pos)


def _dif_kind(mod) -> str:
    kind = mod.dif_kind if isinstance(mod, Modality) else str(mod)
    if kind not in DIF_KINDS:
        raise ValueError(f"unknown dif kind {kind!r}; expected one of {DIF_KINDS}")
    return kind


@dataclass
class SignalTrace:
    """Per-model capture of scalar signal summaries g[j][k].

    ``signals`` maps ``(position name, dif kind)`` to an ``(n+1, m)``
    float32 array: row j is the summary under transformation j, column k
    the test object.  ``predictions``/``truth`` are optional class-id
    tables used by the robust-accuracy baseline.
    """

    model_id: str
    family: TransformationFamily
    m: int
    signals: dict[tuple[str, str], np.ndarray]
    predictions: np.ndarray | None = None
    truth: np.ndarray | None = None
    num_classes: int | None = None
    labels: dict[str, int] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.signals = {
            (str(p), str(k)): np.ascontiguousarray(a, dtype=np.float32)
            for (p, k), a in self.signals.items()
        }
        if self.predictions is not None:
            self.predictions = np.ascontiguousarray(self.predictions, dtype=np.uint16)
        if self.truth is not None:
            self.truth = np.ascontiguousarray(self.truth, dtype=np.uint16)

    @property
    def positions(self) -> list[Position]:
        names: list[str] = []
        for pos, _ in self.signals:
            if pos not in names:
                names.append(pos)
        return [Position(name, i) for i, name in enumerate(names)]

    def plane(self, pos, mod) -> np.ndarray:
        """Signal plane as float64 for downstream arithmetic."""
        key = (_pos_name(pos), _dif_kind(mod))
        if key not in self.signals:
            raise TraceError(f"missing signal plane {plane_label(*key)}")
        return self.signals[key].astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignalTrace):
            return NotImplemented
        if (
            self.model_id != other.model_id
            or self.family != other.family
            or self.m != other.m
            or self.num_classes != other.num_classes
            or self.labels != other.labels
            or self.metadata != other.metadata
        ):
            return False
        if set(self.signals) != set(other.signals):
            return False
        for key, arr in self.signals.items():
            if not np.array_equal(arr.view(np.uint32), other.signals[key].view(np.uint32)):
                return False  # bitwise, so NaN payloads would also compare
        for a, b in ((self.predictions, other.predictions), (self.truth, other.truth)):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def validate_trace(trace: SignalTrace) -> list[str]:
    """Check every trace invariant; returns one message per violation.

    Reports rather than raises so callers can surface all problems at once.
    An empty list means the trace is valid.
    """
    out = list(trace.family.violations())
    n1 = trace.family.n + 1
    if trace.m < 1:
        out.append("m must be >= 1")
    if not trace.signals:
        out.append("trace has no signal planes")
    for (pos, kind), arr in trace.signals.items():
        if kind not in DIF_KINDS:
            out.append(f"unknown dif kind {kind!r} for position {pos}")
            continue
        if arr.shape != (n1, trace.m):
            out.append(
                f"signal plane ({pos},{kind}_dif) has shape {arr.shape}, "
                f"expected ({n1}, {trace.m})"
            )
            continue
        if not np.isfinite(arr).all():
            j, k = np.argwhere(~np.isfinite(arr))[0]
            out.append(f"non-finite signal at ({pos},{kind}_dif,j={j},k={k})")
    if (trace.predictions is None) != (trace.truth is None):
        present = "predictions" if trace.predictions is not None else "truth"
        out.append(f"{present} present without its counterpart")
    if trace.predictions is not None:
        if trace.predictions.shape != (n1, trace.m):
            out.append(f"predictions shape {trace.predictions.shape} != ({n1}, {trace.m})")
        if trace.truth is not None and trace.truth.shape != (trace.m,):
            out.append(f"truth shape {trace.truth.shape} != ({trace.m},)")
        if trace.num_classes is None:
            out.append("predictions present but num_classes undeclared")
        else:
            if trace.predictions.max(initial=0) >= trace.num_classes:
                out.append("prediction class id >= num_classes")
            if trace.truth is not None and trace.truth.max(initial=0) >= trace.num_classes:
                out.append("truth class id >= num_classes")
    for name, value in trace.labels.items():
        if value not in (0, 1):
            out.append(f"label {name!r} must be 0 (invariant) or 1 (variant), got {value!r}")
    return out


def _manifest(trace: SignalTrace) -> dict:
    by_pos: dict[str, list[str]] = {}
    for pos, kind in trace.signals:
        by_pos.setdefault(pos, [])
        if kind not in by_pos[pos]:
            by_pos[pos].append(kind)
    return {
        "format_version": FORMAT_VERSION,
        "model_id": trace.model_id,
        "family": {"kind": trace.family.kind, "v_values": list(trace.family.v_values)},
        "m": trace.m,
        "num_classes": trace.num_classes,
        "positions": [
            {"name": pos, "modalities": sorted(kinds)} for pos, kinds in by_pos.items()
        ],
        "labels": {k: int(v) for k, v in trace.labels.items()},
        "metadata": {str(k): str(v) for k, v in trace.metadata.items()},
    }


def write_trace(trace: SignalTrace, dir: str | Path) -> None:
    """Write a trace directory; raises ValidationError on invariant breaks.

    Re-writing the same trace produces byte-identical files.
    """
    violations = validate_trace(trace)
    if violations:
        raise ValidationError("; ".join(violations))
    root = Path(dir)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(_manifest(trace), fh, sort_keys=True, indent=1)
        fh.write("\n")
    for (pos, kind), arr in trace.signals.items():
        plane_dir = root / "signals" / pos
        plane_dir.mkdir(parents=True, exist_ok=True)
        (plane_dir / f"{kind}.f32").write_bytes(arr.astype("<f4").tobytes())
    if trace.predictions is not None:
        (root / "predictions.u16").write_bytes(trace.predictions.astype("<u2").tobytes())
        (root / "truth.u16").write_bytes(trace.truth.astype("<u2").tobytes())


def read_trace(dir: str | Path) -> SignalTrace:
    """Read a trace directory written by :func:`write_trace` or the exporter."""
    root = Path(dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"missing file {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest.json is not valid JSON: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format_version {version!r}")
    family = TransformationFamily(
        kind=manifest["family"]["kind"],
        v_values=tuple(manifest["family"]["v_values"]),
    )
    n1 = family.n + 1
    m = int(manifest["m"])
    signals: dict[tuple[str, str], np.ndarray] = {}
    for entry in manifest["positions"]:
        pos = entry["name"]
        for kind in entry["modalities"]:
            path = root / "signals" / pos / f"{kind}.f32"
            if not path.is_file():
                raise FormatError(f"missing file {path}")
            raw = path.read_bytes()
            if len(raw) != n1 * m * 4:
                raise FormatError(
                    f"signal payload size mismatch for ({pos},{kind}): "
                    f"{len(raw)} bytes, expected {n1 * m * 4}"
                )
            arr = np.frombuffer(raw, dtype="<f4").reshape(n1, m)
            if not np.isfinite(arr).all():
                raise FormatError(f"non-finite signal values in ({pos},{kind})")
            signals[(pos, kind)] = arr
    predictions = truth = None
    pred_path = root / "predictions.u16"
    truth_path = root / "truth.u16"
    if pred_path.is_file() or truth_path.is_file():
        for path, count in ((pred_path, n1 * m), (truth_path, m)):
            if not path.is_file():
                raise FormatError(f"missing file {path}")
            if len(path.read_bytes()) != count * 2:
                raise FormatError(f"payload size mismatch for {path.name}")
        predictions = np.frombuffer(pred_path.read_bytes(), dtype="<u2").reshape(n1, m)
        truth = np.frombuffer(truth_path.read_bytes(), dtype="<u2")
    trace = SignalTrace(
        model_id=manifest["model_id"],
        family=family,
        m=m,
        signals=signals,
        predictions=predictions,
        truth=truth,
        num_classes=manifest.get("num_classes"),
        labels={k: int(v) for k, v in manifest.get("labels", {}).items()},
        metadata=dict(manifest.get("metadata", {})),
    )
    violations = validate_trace(trace)
    if violations:
        raise ValidationError("; ".join(violations))
    return trace


def signal_plane_csv(trace: SignalTrace, pos, mod) -> str:
    """CSV dump of one signal plane: header ``j,k,value``, one row per cell."""
    g = trace.plane(pos, mod)
    lines = ["j,k,value"]
    for j in range(g.shape[0]):
        for k in range(g.shape[1]):
            lines.append(f"{j},{k},{g[j, k]:.17g}")
    return "\n".join(lines) + "\n"
