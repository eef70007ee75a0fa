"""Knowledge-base construction, persistence, and JSONL ingestion.

A knowledge base is a columnar, immutable snapshot of N labeled reference
utterances: two row-major float32 feature matrices (CM space and profile
space), parallel label/score/id arrays, and precomputed row norms.

On-disk format (all multi-byte values little-endian):

    magic   "RAKB"                       4 bytes
    version u32 (currently 1)
    n       u64
    d_cm    u32
    d_prof  u32
    layout  u32 byte length + UTF-8 "name:width,name:width,..."
    ids     n * u64
    labels  n * u8
    scores  n * f32
    cm      n * d_cm * f32, row-major
    prof    n * d_prof * f32, row-major
    crc     u64, CRC-64/XZ over every preceding byte

Loading verifies magic, version, declared size, and checksum, and then maps
the columnar blocks as zero-copy read-only views over the file bytes, so a
load is one allocation plus a checksum pass.

Ingestion reads line-delimited JSON records produced by an external feature
extraction pipeline; every error is reported with its 1-based line number.
"""

from __future__ import annotations

import json
import logging
import struct
import sys
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyInputError,
    InvalidLabelError,
    InvalidLayoutError,
    NonFiniteValueError,
    ParseError,
    RaddError,
    ScoreOutOfRangeError,
    StoreIOError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .types import (
    DEFAULT_PROFILE_LAYOUT,
    KnowledgeEntry,
    ProfileLayout,
    QueryRecord,
    validate_label,
    validate_score,
)

logger = logging.getLogger(__name__)

MAGIC = b"RAKB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQII")  # magic, version, n, d_cm, d_prof

Space = Literal["cm", "prof"]


# --- CRC-64/XZ ---------------------------------------------------------------
# Reflected ECMA-182 polynomial, init/xorout all-ones (the xz-utils variant).
# Slice-by-8 tables keep the pure-Python loop fast enough for desk-scale files.

_CRC64_POLY = 0xC96C5795D7870F42


def _crc64_tables() -> list[list[int]]:
    t0 = []
    for b in range(256):
        crc = b
        for _ in range(8):
            crc = (crc >> 1) ^ _CRC64_POLY if crc & 1 else crc >> 1
        t0.append(crc)
    tables = [t0]
    for _ in range(7):
        prev = tables[-1]
        tables.append([(prev[b] >> 8) ^ t0[prev[b] & 0xFF] for b in range(256)])
    return tables


_T = _crc64_tables()
_MASK64 = (1 << 64) - 1


def crc64(data: bytes | memoryview, crc: int = 0) -> int:
    """CRC-64/XZ of *data*; pass a previous result as *crc* to continue."""
    crc = (crc ^ _MASK64) & _MASK64
    view = memoryview(data)
    # The slice-by-8 fast path reads the stream as LE u64 words.
    n8 = len(view) - (len(view) % 8) if sys.byteorder == "little" else 0
    words = memoryview(view[:n8]).cast("Q") if n8 else ()
    t0, t1, t2, t3, t4, t5, t6, t7 = _T
    for w in words:
        x = crc ^ w
        crc = (
            t7[x & 0xFF]
            ^ t6[(x >> 8) & 0xFF]
            ^ t5[(x >> 16) & 0xFF]
            ^ t4[(x >> 24) & 0xFF]
            ^ t3[(x >> 32) & 0xFF]
            ^ t2[(x >> 40) & 0xFF]
            ^ t1[(x >> 48) & 0xFF]
            ^ t0[x >> 56]
        )
    for b in view[n8:]:
        crc = (crc >> 8) ^ t0[(crc ^ b) & 0xFF]
    return crc ^ _MASK64


# --- knowledge base ----------------------------------------------------------

class KnowledgeBase:
    """Immutable indexed collection of reference utterances.

    All arrays are parallel over the n rows and are read-only after
    construction; the object is safe to share across threads. Similarity math
    runs in float64, so float64 copies of the feature matrices are cached
    lazily on first retrieval.
    """

    def __init__(
        self,
        ids: np.ndarray,
        labels: np.ndarray,
        scores: np.ndarray,
        cm_matrix: np.ndarray,
        prof_matrix: np.ndarray,
        layout: ProfileLayout,
    ):
        self.ids = _frozen(ids, np.uint64)
        self.labels = _frozen(labels, np.uint8)
        self.scores = _frozen(scores, np.float32)
        self.cm_matrix = _frozen(cm_matrix, np.float32)
        self.prof_matrix = _frozen(prof_matrix, np.float32)
        self.layout = layout
        if self.cm_matrix.ndim != 2 or self.prof_matrix.ndim != 2:
            raise DimensionMismatchError("feature matrices must be 2-dimensional")
        self.n = int(self.cm_matrix.shape[0])
        self.d_cm = int(self.cm_matrix.shape[1])
        self.d_prof = int(self.prof_matrix.shape[1])
        if self.n < 1 or self.d_cm < 1 or self.d_prof < 1:
            raise EmptyInputError("knowledge base needs at least one row and one dimension per space")
        if self.prof_matrix.shape[0] != self.n:
            raise DimensionMismatchError("cm and prof matrices disagree on row count")
        if layout.total_dim != self.d_prof:
            raise InvalidLayoutError(
                f"layout covers {layout.total_dim} dims but prof matrix has {self.d_prof}"
            )
        for name, arr in (("ids", self.ids), ("labels", self.labels), ("scores", self.scores)):
            if arr.shape != (self.n,):
                raise DimensionMismatchError(f"{name} has length {arr.shape}, expected ({self.n},)")
        # One enforcement point for row invariants, whatever the construction
        # path (build, from_arrays, or a checksum-valid but hand-edited file).
        if np.unique(self.ids).size != self.n:
            raise DuplicateIdError("ids are not unique")
        if self.labels.max() > 1:
            raise InvalidLabelError("labels must be 0 or 1")
        if not np.isfinite(self.cm_matrix).all() or not np.isfinite(self.prof_matrix).all():
            raise NonFiniteValueError("feature matrices must be finite")
        smin, smax = float(self.scores.min()), float(self.scores.max())
        if not (np.isfinite(smin) and 0.0 < smin and smax < 1.0):
            raise ScoreOutOfRangeError("scores must lie strictly inside (0, 1)")
        self.cm_norms = _row_norms(self.cm_matrix)
        self.prof_norms = _row_norms(self.prof_matrix)
        self._dense64: dict[str, np.ndarray] = {}

    def dim(self, space: Space) -> int:
        return self.d_cm if space == "cm" else self.d_prof

    def matrix(self, space: Space) -> np.ndarray:
        return self.cm_matrix if space == "cm" else self.prof_matrix

    def norms(self, space: Space) -> np.ndarray:
        return self.cm_norms if space == "cm" else self.prof_norms

    def matrix64(self, space: Space) -> np.ndarray:
        """Float64 copy of a feature matrix, built once on first use."""
        cached = self._dense64.get(space)
        if cached is None:
            cached = np.ascontiguousarray(self.matrix(space), dtype=np.float64)
            cached.flags.writeable = False
            self._dense64[space] = cached
        return cached

    def with_profile_matrix(self, prof_matrix: np.ndarray, layout: ProfileLayout) -> "KnowledgeBase":
        """Derived base sharing ids/labels/scores/cm but with a replacement
        profile matrix (used by masking and normalization views)."""
        return KnowledgeBase(self.ids, self.labels, self.scores, self.cm_matrix, prof_matrix, layout)

    def __len__(self) -> int:
        return self.n


def _frozen(arr, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr and out.flags.writeable:
        out = out.copy()
    out.flags.writeable = False
    return out


def _row_norms(matrix: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix, dtype=np.float64))
    norms.flags.writeable = False
    return norms


def build(entries: Sequence[KnowledgeEntry], layout: ProfileLayout = DEFAULT_PROFILE_LAYOUT) -> KnowledgeBase:
    """Build a knowledge base from validated entries, preserving order:
    the i-th entry becomes row i.

    Raises:
        EmptyInputError: No entries.
        DuplicateIdError: Two entries share an id (reports the id).
        DimensionMismatchError: Entries disagree on dimensions, or the profile
            dimension does not match *layout*.
    """
    if len(entries) == 0:
        raise EmptyInputError("cannot build a knowledge base from zero entries")
    d_cm = entries[0].cm.shape[0]
    d_prof = entries[0].prof.shape[0]
    if d_prof != layout.total_dim:
        raise DimensionMismatchError(
            f"profile dimension {d_prof} does not match layout total {layout.total_dim}"
        )
    seen: set[int] = set()
    for pos, e in enumerate(entries):
        if e.cm.shape[0] != d_cm or e.prof.shape[0] != d_prof:
            raise DimensionMismatchError(
                f"entry {e.id} (position {pos}) has dims "
                f"({e.cm.shape[0]}, {e.prof.shape[0]}), expected ({d_cm}, {d_prof})"
            )
        if e.id in seen:
            raise DuplicateIdError(f"duplicate entry id {e.id}", entry_id=e.id)
        seen.add(e.id)
    ids = np.fromiter((e.id for e in entries), dtype=np.uint64, count=len(entries))
    labels = np.fromiter((e.label for e in entries), dtype=np.uint8, count=len(entries))
    scores = np.fromiter((e.score for e in entries), dtype=np.float32, count=len(entries))
    cm = np.stack([e.cm for e in entries])
    prof = np.stack([e.prof for e in entries])
    return KnowledgeBase(ids, labels, scores, cm, prof, layout)


def from_arrays(
    ids,
    labels,
    scores,
    cm_matrix,
    prof_matrix,
    layout: ProfileLayout = DEFAULT_PROFILE_LAYOUT,
) -> KnowledgeBase:
    """Bulk constructor from parallel arrays (bypasses per-entry objects;
    intended for generators and tests that build large bases)."""
    return KnowledgeBase(
        np.asarray(ids), np.asarray(labels), np.asarray(scores),
        np.asarray(cm_matrix), np.asarray(prof_matrix), layout,
    )


# --- persistence -------------------------------------------------------------

def save(base: KnowledgeBase, path) -> None:
    """Write *base* to *path* in the RAKB binary format."""
    desc = base.layout.to_descriptor().encode("utf-8")
    parts = [
        _HEADER.pack(MAGIC, FORMAT_VERSION, base.n, base.d_cm, base.d_prof),
        struct.pack("<I", len(desc)),
        desc,
        base.ids.astype("<u8", copy=False).tobytes(),
        base.labels.tobytes(),
        base.scores.astype("<f4", copy=False).tobytes(),
        base.cm_matrix.astype("<f4", copy=False).tobytes(),
        base.prof_matrix.astype("<f4", copy=False).tobytes(),
    ]
    crc = 0
    for part in parts:
        crc = crc64(part, crc)
    try:
        with open(path, "wb") as fh:
            for part in parts:
                fh.write(part)
            fh.write(struct.pack("<Q", crc))
    except OSError as exc:
        raise StoreIOError(f"cannot write knowledge base to {path}: {exc}") from exc


def load(path) -> KnowledgeBase:
    """Read a knowledge base written by :func:`save`.

    The returned base's columnar arrays are zero-copy views over the file
    bytes. Raises BadMagicError, UnsupportedVersionError, TruncatedFileError,
    ChecksumMismatchError, or StoreIOError as appropriate.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise StoreIOError(f"cannot read knowledge base from {path}: {exc}") from exc
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: file too short to hold a header ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < _HEADER.size + 4:
        raise TruncatedFileError(f"{path}: truncated header ({len(data)} bytes)")
    _, version, n, d_cm, d_prof = _HEADER.unpack_from(data, 0)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (desc_len,) = struct.unpack_from("<I", data, _HEADER.size)
    offset = _HEADER.size + 4
    if len(data) < offset + desc_len:
        raise TruncatedFileError(f"{path}: truncated inside layout descriptor")
    layout = ProfileLayout.from_descriptor(data[offset : offset + desc_len].decode("utf-8"))
    offset += desc_len

    sizes = [n * 8, n * 1, n * 4, n * d_cm * 4, n * d_prof * 4]
    expected = offset + sum(sizes) + 8
    if len(data) < expected:
        raise TruncatedFileError(
            f"{path}: file has {len(data)} bytes but header declares {expected}"
        )
    if len(data) > expected:
        raise TruncatedFileError(
            f"{path}: {len(data) - expected} bytes of trailing data after checksum"
        )
    (stored_crc,) = struct.unpack_from("<Q", data, expected - 8)
    actual_crc = crc64(memoryview(data)[: expected - 8])
    if stored_crc != actual_crc:
        raise ChecksumMismatchError(
            f"{path}: checksum mismatch (stored {stored_crc:#018x}, computed {actual_crc:#018x})"
        )

    ids = np.frombuffer(data, dtype="<u8", count=n, offset=offset)
    offset += sizes[0]
    labels = np.frombuffer(data, dtype=np.uint8, count=n, offset=offset)
    offset += sizes[1]
    scores = np.frombuffer(data, dtype="<f4", count=n, offset=offset)
    offset += sizes[2]
    cm = np.frombuffer(data, dtype="<f4", count=n * d_cm, offset=offset).reshape(n, d_cm)
    offset += sizes[3]
    prof = np.frombuffer(data, dtype="<f4", count=n * d_prof, offset=offset).reshape(n, d_prof)
    return KnowledgeBase(ids, labels, scores, cm, prof, layout)


# --- JSONL ingestion ---------------------------------------------------------

def _reraise_with_line(exc: RaddError, lineno: int):
    exc.args = (f"line {lineno}: {exc}",)
    exc.line = lineno
    raise exc


def _parse_vector(obj: dict, key: str, expected: int | None) -> list:
    values = obj.get(key)
    if not isinstance(values, list) or not values:
        raise ParseError(f"field {key!r} must be a non-empty array")
    if expected is not None and len(values) != expected:
        raise DimensionMismatchError(f"field {key!r} has length {len(values)}, expected {expected}")
    return values


def _parse_record(obj: dict, d_cm: int | None, d_prof: int, require_label: bool):
    if not isinstance(obj, dict):
        raise ParseError(f"record must be a JSON object, got {type(obj).__name__}")
    if "id" not in obj:
        raise ParseError("record is missing required field 'id'")
    rec_id = obj["id"]
    if isinstance(rec_id, bool) or not isinstance(rec_id, int) or rec_id < 0:
        raise ParseError(f"field 'id' must be a non-negative integer, got {rec_id!r}")
    label = obj.get("label")
    if label is None:
        if require_label:
            raise InvalidLabelError("record is missing required field 'label'")
    else:
        label = validate_label(label, context="field 'label'")
    if "score" not in obj:
        raise ParseError("record is missing required field 'score'")
    raw_score = obj["score"]
    if isinstance(raw_score, bool) or not isinstance(raw_score, (int, float)):
        raise ParseError(f"field 'score' must be a number, got {raw_score!r}")
    score = validate_score(raw_score, context="field 'score'")
    cm = _parse_vector(obj, "cm", d_cm)
    prof = _parse_vector(obj, "prof", d_prof)
    meta = obj.get("meta")
    if meta is not None and not isinstance(meta, str):
        raise ParseError(f"field 'meta' must be a string, got {meta!r}")
    return rec_id, label, score, cm, prof, meta


def _iter_jsonl(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    yield lineno, line
    except OSError as exc:
        raise StoreIOError(f"cannot read {path}: {exc}") from exc


def ingest_jsonl(path, layout: ProfileLayout = DEFAULT_PROFILE_LAYOUT) -> list[KnowledgeEntry]:
    """Parse a knowledge JSONL file into entries, preserving line order.

    The CM dimension is fixed by the first record; the profile dimension must
    match *layout*. Every error carries the offending 1-based line number.
    Degenerate all-zero feature rows are accepted but counted and logged,
    since their retrieval behavior is the similarity sentinel, not a crash.
    """
    entries: list[KnowledgeEntry] = []
    d_cm: int | None = None
    zero_rows = 0
    for lineno, line in _iter_jsonl(path):
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}") from exc
            rec_id, label, score, cm, prof, meta = _parse_record(
                obj, d_cm, layout.total_dim, require_label=True
            )
            entry = KnowledgeEntry(id=rec_id, cm=cm, prof=prof, label=label, score=score, meta=meta)
        except RaddError as exc:
            _reraise_with_line(exc, lineno)
        if d_cm is None:
            d_cm = entry.cm.shape[0]
        if not entry.cm.any() or not entry.prof.any():
            zero_rows += 1
        entries.append(entry)
    if zero_rows:
        logger.warning("%s: %d entries have an all-zero feature vector", path, zero_rows)
    return entries


def read_queries_jsonl(path, layout: ProfileLayout = DEFAULT_PROFILE_LAYOUT) -> list[QueryRecord]:
    """Parse a query JSONL file (same record schema; label optional)."""
    queries: list[QueryRecord] = []
    d_cm: int | None = None
    for lineno, line in _iter_jsonl(path):
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}") from exc
            rec_id, label, score, cm, prof, _ = _parse_record(
                obj, d_cm, layout.total_dim, require_label=False
            )
            record = QueryRecord(id=rec_id, cm=cm, prof=prof, score=score, label=label)
        except RaddError as exc:
            _reraise_with_line(exc, lineno)
        if d_cm is None:
            d_cm = record.cm.shape[0]
        queries.append(record)
    return queries


def _json_floats(arr: np.ndarray) -> list[float]:
    # float32 -> Python float is exact, and json emits the shortest repr,
    # so writing and re-ingesting restores identical float32 bits.
    return [float(x) for x in arr]


def entry_to_json(entry: KnowledgeEntry) -> str:
    obj = {
        "id": entry.id,
        "label": entry.label,
        "score": entry.score,
        "cm": _json_floats(entry.cm),
        "prof": _json_floats(entry.prof),
    }
    if entry.meta is not None:
        obj["meta"] = entry.meta
    return json.dumps(obj, separators=(",", ":"))


def query_to_json(record: QueryRecord) -> str:
    obj: dict = {"id": record.id}
    if record.label is not None:
        obj["label"] = record.label
    obj["score"] = record.score
    obj["cm"] = _json_floats(record.cm)
    obj["prof"] = _json_floats(record.prof)
    return json.dumps(obj, separators=(",", ":"))


def write_jsonl(path, lines: Iterable[str]) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line)
                fh.write("\n")
    except OSError as exc:
        raise StoreIOError(f"cannot write {path}: {exc}") from exc


# --- optional profile normalization -------------------------------------------

def profile_zscore(
    base: KnowledgeBase, queries: Sequence[QueryRecord]
) -> tuple[KnowledgeBase, list[QueryRecord]]:
    """Per-dimension z-score normalization of the profile space.

    Statistics (mean, standard deviation) are computed on the knowledge base
    only and applied identically to base rows and queries, so the two sides
    stay comparable. Zero-variance dimensions are centered but not scaled.
    Off by default; the raw concatenated profile is the canonical behavior.
    """
    prof64 = base.prof_matrix.astype(np.float64)
    mean = prof64.mean(axis=0)
    std = prof64.std(axis=0)
    std[std == 0.0] = 1.0
    new_prof = ((prof64 - mean) / std).astype(np.float32)
    view = base.with_profile_matrix(new_prof, base.layout)
    new_queries = []
    for q in queries:
        if q.prof.shape[0] != base.d_prof:
            raise DimensionMismatchError(
                f"query {q.id} has profile dim {q.prof.shape[0]}, expected {base.d_prof}"
            )
        nq = ((q.prof.astype(np.float64) - mean) / std).astype(np.float32)
        if not np.isfinite(nq).all():
            # can only happen on float32 overflow after scaling
            nq = np.nan_to_num(nq, posinf=np.finfo(np.float32).max, neginf=np.finfo(np.float32).min)
        new_queries.append(QueryRecord(id=q.id, cm=q.cm, prof=nq, score=q.score, label=q.label))
    return view, new_queries
