"""Shared domain types: feature vectors, labels, scores, records, and the
profile-vector layout.

Feature vectors are plain 1-d ``numpy.float32`` arrays (made read-only on
validation); there is no wrapper class. All record types are frozen
dataclasses and validate their payload at construction, so anything that
exists is well-formed: finite float32 features, labels in {0, 1}, scores
strictly inside (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidLabelError,
    InvalidLayoutError,
    NonFiniteValueError,
    ScoreOutOfRangeError,
)

__all__ = [
    "DEFAULT_PROFILE_LAYOUT",
    "KnowledgeEntry",
    "ProfileLayout",
    "QueryRecord",
    "as_feature_vector",
    "validate_label",
    "validate_score",
    "validate_vector",
]

_MAX_ID = 2**64 - 1


def as_feature_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce *values* to a read-only 1-d float32 array, rejecting non-finite
    elements.

    Values that overflow float32 become infinite after the cast and are
    rejected the same way as NaN/inf inputs.

    Raises:
        DimensionMismatchError: If *values* is not 1-dimensional or is empty.
        NonFiniteValueError: If any element is NaN or infinite (the message
            and ``.index`` report the first offending position).
    """
    with np.errstate(over="ignore"):  # overflow becomes inf; rejected below
        arr = np.asarray(values, dtype=np.float32)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size < 1:
        raise DimensionMismatchError(f"{name} must have at least one element")
    finite = np.isfinite(arr)
    if not finite.all():
        idx = int(np.flatnonzero(~finite)[0])
        raise NonFiniteValueError(f"{name} has non-finite value at index {idx}", index=idx)
    if arr is values:
        if not arr.flags.writeable:
            return arr  # already validated and frozen; reuse
        arr = arr.copy()  # never flip flags on a caller-owned array
    arr.flags.writeable = False
    return arr


def validate_vector(v, expected_dim: int, name: str = "vector") -> np.ndarray:
    """Validate *v* as a finite float32 vector of exactly *expected_dim*
    elements and return it (read-only).

    Raises:
        DimensionMismatchError: Wrong length.
        NonFiniteValueError: NaN or infinity present (reports the index).
    """
    with np.errstate(over="ignore"):
        arr = np.asarray(v, dtype=np.float32)
    if arr.ndim != 1 or arr.shape[0] != expected_dim:
        raise DimensionMismatchError(
            f"{name} has dimension {arr.shape[0] if arr.ndim == 1 else arr.shape}, "
            f"expected {expected_dim}"
        )
    return as_feature_vector(arr, name)


def validate_label(value, context: str = "label") -> int:
    """Accept only the literal integers 0 and 1; no coercion."""
    if isinstance(value, bool) or type(value) is not int:
        raise InvalidLabelError(f"{context} must be the integer 0 or 1, got {value!r}")
    if value not in (0, 1):
        raise InvalidLabelError(f"{context} must be 0 or 1, got {value}")
    return value


def validate_score(value, context: str = "score") -> float:
    """Validate a CM prediction score.

    The score is rounded to float32 (the storage precision) before the range
    check, so a value that only reaches 0.0 or 1.0 after rounding is rejected
    rather than silently stored at the boundary. Returns the float32-exact
    value as a Python float.
    """
    try:
        s32 = np.float32(value)
    except (TypeError, ValueError) as exc:
        raise ScoreOutOfRangeError(f"{context} is not a number: {value!r}") from exc
    if not np.isfinite(s32) or not 0.0 < float(s32) < 1.0:
        raise ScoreOutOfRangeError(
            f"{context} must lie strictly inside (0, 1), got {value!r}"
        )
    return float(s32)


def _validate_id(value, context: str) -> int:
    if isinstance(value, bool) or type(value) is not int:
        raise InvalidLabelError(f"{context} id must be an integer, got {value!r}")
    if not 0 <= value <= _MAX_ID:
        raise InvalidLabelError(f"{context} id must fit in an unsigned 64-bit integer, got {value}")
    return value


@dataclass(frozen=True)
class ProfileLayout:
    """Ordered (attribute name, span width) pairs partitioning a profile
    vector.

    Spans are implicitly contiguous: attribute i occupies the width-sized
    block immediately after attribute i-1, so the pairs always cover
    [0, total_dim) exactly with no overlap.
    """

    attributes: tuple[tuple[str, int], ...]

    def __post_init__(self):
        attrs = tuple((str(n), int(w)) for n, w in self.attributes)
        if not attrs:
            raise InvalidLayoutError("layout must contain at least one attribute")
        names = [n for n, _ in attrs]
        if len(set(names)) != len(names):
            raise InvalidLayoutError(f"duplicate attribute names in layout: {names}")
        for name, width in attrs:
            if not name or ":" in name or "," in name:
                raise InvalidLayoutError(f"invalid attribute name {name!r}")
            if width < 1:
                raise InvalidLayoutError(f"attribute {name!r} must have width >= 1, got {width}")
        object.__setattr__(self, "attributes", attrs)

    @property
    def total_dim(self) -> int:
        """Total profile dimension (sum of span widths)."""
        return sum(w for _, w in self.attributes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.attributes)

    def spans(self) -> dict[str, tuple[int, int]]:
        """Map each attribute to its half-open [start, stop) index span."""
        out, start = {}, 0
        for name, width in self.attributes:
            out[name] = (start, start + width)
            start += width
        return out

    def to_descriptor(self) -> str:
        """Serialize as comma-separated ``name:width`` pairs."""
        return ",".join(f"{n}:{w}" for n, w in self.attributes)

    @classmethod
    def from_descriptor(cls, descriptor: str) -> "ProfileLayout":
        """Parse the ``name:width`` descriptor format.

        Raises:
            InvalidLayoutError: On any malformed pair.
        """
        pairs = []
        for part in descriptor.split(","):
            name, sep, width = part.partition(":")
            if not sep:
                raise InvalidLayoutError(f"layout descriptor pair {part!r} lacks ':'")
            try:
                pairs.append((name, int(width)))
            except ValueError as exc:
                raise InvalidLayoutError(f"bad span width in {part!r}") from exc
        return cls(tuple(pairs))


# Composition of the default profile extractor: age decile scalar, one-hot
# gender, emotion trait scalar plus 256-d embedding, 25-d voice quality.
DEFAULT_PROFILE_LAYOUT = ProfileLayout(
    (("age", 1), ("gender", 2), ("emotion", 257), ("voice_quality", 25))
)


@dataclass(frozen=True)
class KnowledgeEntry:
    """One labeled reference utterance: CM feature vector, profile feature
    vector, binary ground-truth label, and the CM's prediction score."""

    id: int
    cm: np.ndarray
    prof: np.ndarray
    label: int
    score: float
    meta: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", _validate_id(self.id, "entry"))
        object.__setattr__(self, "cm", as_feature_vector(self.cm, "cm"))
        object.__setattr__(self, "prof", as_feature_vector(self.prof, "prof"))
        object.__setattr__(self, "label", validate_label(self.label))
        object.__setattr__(self, "score", validate_score(self.score))


@dataclass(frozen=True)
class QueryRecord:
    """One evaluation utterance. The ground-truth label is optional: it is
    present in evaluation sets and absent in live queries."""

    id: int
    cm: np.ndarray
    prof: np.ndarray
    score: float
    label: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", _validate_id(self.id, "query"))
        object.__setattr__(self, "cm", as_feature_vector(self.cm, "cm"))
        object.__setattr__(self, "prof", as_feature_vector(self.prof, "prof"))
        object.__setattr__(self, "score", validate_score(self.score))
        if self.label is not None:
            object.__setattr__(self, "label", validate_label(self.label))
