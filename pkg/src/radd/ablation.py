"""Attribute probing: evaluate with selected profile attributes removed.

A mask names the attributes to exclude. The same mask must be applied to the
knowledge base and to every query, which this module does in one step: it
builds an in-memory view of the base with the masked profile matrix (norms
recomputed for the reduced space, CM space untouched) and masks the query
profiles identically. Nothing is persisted; the Table-2-style protocol sweeps
several masks over one base.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import EnsembleStrategy
from .errors import (
    AllAttributesExcludedError,
    DimensionMismatchError,
    UnknownAttributeError,
)
from .metrics import EvalReport, evaluate
from .retrieval import RetrievalStrategy
from .store import KnowledgeBase
from .types import ProfileLayout, QueryRecord

logger = logging.getLogger(__name__)

__all__ = ["AttributeMask", "ablation_run", "apply_mask", "mask_base", "masked_layout"]


@dataclass(frozen=True)
class AttributeMask:
    """Set of profile-layout attribute names to exclude. May be empty (the
    identity mask) but may not cover every attribute."""

    excluded: frozenset[str]

    def __init__(self, excluded=()):
        object.__setattr__(self, "excluded", frozenset(excluded))

    def validate(self, layout: ProfileLayout) -> None:
        unknown = self.excluded - set(layout.names)
        if unknown:
            raise UnknownAttributeError(
                f"mask names unknown attributes {sorted(unknown)}; layout has {list(layout.names)}"
            )
        if self.excluded >= set(layout.names):
            raise AllAttributesExcludedError("mask may not exclude every attribute")

    def label(self) -> str:
        if not self.excluded:
            return "full"
        return "w/o " + "+".join(sorted(self.excluded))


def masked_layout(layout: ProfileLayout, mask: AttributeMask) -> ProfileLayout:
    """Layout of the surviving attributes, original order preserved."""
    mask.validate(layout)
    return ProfileLayout(tuple((n, w) for n, w in layout.attributes if n not in mask.excluded))


def _kept_columns(layout: ProfileLayout, mask: AttributeMask) -> np.ndarray:
    spans = layout.spans()
    cols: list[int] = []
    for name in layout.names:
        if name not in mask.excluded:
            start, stop = spans[name]
            cols.extend(range(start, stop))
    return np.asarray(cols, dtype=np.intp)


def apply_mask(v, layout: ProfileLayout, mask: AttributeMask) -> np.ndarray:
    """Concatenation of the non-excluded spans of profile vector *v*.

    The output dimension is the layout total minus the excluded widths; an
    empty mask returns the vector unchanged.
    """
    mask.validate(layout)
    vec = np.asarray(v, dtype=np.float32)
    if vec.ndim != 1 or vec.shape[0] != layout.total_dim:
        raise DimensionMismatchError(
            f"vector has dimension {vec.shape[0] if vec.ndim == 1 else vec.shape}, "
            f"expected {layout.total_dim}"
        )
    if not mask.excluded:
        return vec
    return vec[_kept_columns(layout, mask)]


def mask_base(base: KnowledgeBase, mask: AttributeMask) -> KnowledgeBase:
    """In-memory view of *base* with masked profile rows and recomputed
    profile norms. The CM matrix is shared, not copied."""
    new_layout = masked_layout(base.layout, mask)
    cols = _kept_columns(base.layout, mask)
    new_prof = np.ascontiguousarray(base.prof_matrix[:, cols])
    return base.with_profile_matrix(new_prof, new_layout)


def mask_queries(
    queries: Sequence[QueryRecord], layout: ProfileLayout, mask: AttributeMask
) -> list[QueryRecord]:
    """Apply *mask* to every query's profile vector."""
    out = []
    for q in queries:
        masked = apply_mask(q.prof, layout, mask)
        out.append(QueryRecord(id=q.id, cm=q.cm, prof=masked, score=q.score, label=q.label))
    return out


def ablation_run(
    base: KnowledgeBase,
    queries: Sequence[QueryRecord],
    mask: AttributeMask,
    strategy: RetrievalStrategy | None,
    ensemble: EnsembleStrategy | None,
    k: int,
    parallelism: int = 1,
) -> EvalReport:
    """Evaluate with *mask* applied symmetrically to base and queries.

    With CM-only retrieval the mask cannot change anything; the run still
    executes but logs a warning instead of silently doing meaningless work.
    """
    mask.validate(base.layout)
    if strategy is RetrievalStrategy.CM_ONLY and mask.excluded:
        logger.warning("mask %s has no effect on cm-only retrieval", mask.label())
    masked = mask_base(base, mask)
    masked_qs = mask_queries(queries, base.layout, mask)
    return evaluate(masked, masked_qs, strategy, ensemble, k, parallelism)
