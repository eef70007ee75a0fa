"""Seeded synthetic datasets that reproduce the zero-day premise at desk
scale: a fake cluster the CM scores correctly (seen), plus a zero-day fake
cluster that sits near the seen-fake cluster in representation space while
its CM scores are miscalibrated. Retrieval can then recover the labels the
raw scores lose.

Geometry (CM space): three isotropic, unit-variance Gaussian clusters. The
real-cluster center is placed at a seeded nonzero location (norm
2 * cluster_sep); the seen-fake center sits at distance ``cluster_sep`` from
it along an orthogonal direction, and the zero-day center is displaced from
the seen-fake center by ``zeroday_shift`` along a third orthogonal direction,
so the zero-day cluster is always nearer to seen-fake than to real. The
centers are offset from the origin because retrieval uses cosine similarity:
directions of points in a cluster centered exactly at the origin are
isotropic, and no retrieval strategy could separate anything.

Scores: the CM score of a point is a logistic of its signed distance to the
midplane between the real and seen-fake centers (negative side real),
normalized so cluster centers sit three logistic units from the plane, and
clamped into [0.01, 0.99]. A miscalibration factor m in [0, 1] rescales the
zero-day logistic argument by (1 - 2m): at m=0 zero-day scores follow the
same rule as seen data, at m=0.5 they collapse to exactly 0.5, and at m=1
they mirror onto the real side, which is what a fully fooled detector emits.

Randomness: a single numpy PCG64 stream seeded from the config. The draw
order is fixed, so a given (config, numpy version) pair always produces
byte-identical datasets; the generator name and numpy version are recorded
in the manifest written next to emitted files.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError
from .types import DEFAULT_PROFILE_LAYOUT, KnowledgeEntry, QueryRecord

__all__ = ["RNG_ALGORITHM", "SynthConfig", "generate"]

RNG_ALGORITHM = "numpy.random.PCG64"

_ANCHOR_FACTOR = 2.0  # real-center norm, in units of cluster_sep
_SCORE_STEEPNESS = 3.0  # logistic units from midplane to a cluster center
_SCORE_CLAMP = (0.01, 0.99)
_EMOTION_DIM = 256
_EMOTION_NOISE = 0.9
_VOICE_DIM = 25
_VOICE_NOISE = 0.12


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic zero-day scenario.

    ``cluster_sep`` is the distance between the real and seen-fake centers in
    units of the within-cluster standard deviation; ``zeroday_shift`` is the
    displacement of the zero-day cluster from the seen-fake center in the
    same units; ``score_miscalibration`` is how far zero-day CM scores are
    pulled from the true logistic rule (0 = calibrated, 1 = fully fooled).
    """

    seed: int
    d_cm: int = 16
    d_prof: int = DEFAULT_PROFILE_LAYOUT.total_dim
    n_real: int = 2000
    n_seen_fake: int = 2000
    n_query_real: int = 200
    n_query_zeroday: int = 200
    cluster_sep: float = 12.0
    zeroday_shift: float = 2.0
    score_miscalibration: float = 1.0

    def validate(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise InvalidConfigError(f"seed must fit in 64 bits, got {self.seed}")
        if self.d_cm < 3:
            raise InvalidConfigError(
                f"d_cm must be >= 3 (three orthogonal cluster directions), got {self.d_cm}"
            )
        if self.d_prof != DEFAULT_PROFILE_LAYOUT.total_dim:
            raise InvalidConfigError(
                f"profile vectors follow the default layout, so d_prof must be "
                f"{DEFAULT_PROFILE_LAYOUT.total_dim}, got {self.d_prof}"
            )
        for name in ("n_real", "n_seen_fake", "n_query_real", "n_query_zeroday"):
            if getattr(self, name) < 1:
                raise InvalidConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.cluster_sep > 0:
            raise InvalidConfigError(f"cluster_sep must be positive, got {self.cluster_sep}")
        if self.zeroday_shift < 0:
            raise InvalidConfigError(f"zeroday_shift must be >= 0, got {self.zeroday_shift}")
        if not 0.0 <= self.score_miscalibration <= 1.0:
            raise InvalidConfigError(
                f"score_miscalibration must be in [0, 1], got {self.score_miscalibration}"
            )

    @classmethod
    def from_dict(cls, obj: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise InvalidConfigError(f"unknown config fields: {sorted(unknown)}")
        if "seed" not in obj:
            raise InvalidConfigError("config requires a 'seed'")
        try:
            config = cls(**obj)
        except TypeError as exc:
            raise InvalidConfigError(f"bad config: {exc}") from exc
        config.validate()
        return config


def _logistic(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


class _ProfileModel:
    """Per-cluster profile generators with extractor-shaped attribute supports:
    integer age decile, one-hot gender, emotion trait scalar plus unit-norm
    embedding, and a bounded voice-quality block. Age/gender/trait carry no
    class signal; the embedding and voice-quality blocks are drawn around
    per-cluster anchors (the zero-day cluster reuses the seen-fake anchors,
    since its novelty lives in CM space, not in voice profile space)."""

    def __init__(self, rng: np.random.Generator):
        self.emb_real = _unit(rng.standard_normal(_EMOTION_DIM))
        self.emb_fake = _unit(rng.standard_normal(_EMOTION_DIM))
        self.voice_real = rng.uniform(0.3, 0.7, _VOICE_DIM)
        self.voice_fake = rng.uniform(0.3, 0.7, _VOICE_DIM)

    def sample(self, rng: np.random.Generator, n: int, fake_like: bool) -> np.ndarray:
        age = rng.integers(0, 11, size=(n, 1)).astype(np.float64)
        gender = np.zeros((n, 2))
        gender[np.arange(n), rng.integers(0, 2, size=n)] = 1.0
        trait = rng.integers(0, 8, size=(n, 1)).astype(np.float64)
        emb_anchor = self.emb_fake if fake_like else self.emb_real
        emb = emb_anchor + _EMOTION_NOISE * rng.standard_normal((n, _EMOTION_DIM))
        emb_norms = np.linalg.norm(emb, axis=1, keepdims=True)
        emb_norms[emb_norms == 0.0] = 1.0
        emb /= emb_norms
        voice_anchor = self.voice_fake if fake_like else self.voice_real
        voice = np.clip(
            voice_anchor + _VOICE_NOISE * rng.standard_normal((n, _VOICE_DIM)), 0.0, 1.0
        )
        return np.hstack([age, gender, trait, emb, voice]).astype(np.float32)


def generate(config: SynthConfig) -> tuple[list[KnowledgeEntry], list[QueryRecord]]:
    """Generate (knowledge entries, labeled query records) for *config*.

    Deterministic for a fixed seed. Knowledge entries come out as the real
    block followed by the seen-fake block (ids 0..n-1 in order); queries as
    the real block followed by the zero-day block.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))

    # Three orthonormal directions: real-center anchor, real->fake axis,
    # zero-day displacement.
    basis, _ = np.linalg.qr(rng.standard_normal((config.d_cm, 3)))
    u_anchor, u_axis, u_shift = basis.T
    center_real = _ANCHOR_FACTOR * config.cluster_sep * u_anchor
    center_fake = center_real + config.cluster_sep * u_axis
    center_zd = center_fake + config.zeroday_shift * u_shift

    profiles = _ProfileModel(rng)

    def cm_block(center: np.ndarray, n: int) -> np.ndarray:
        return (center + rng.standard_normal((n, config.d_cm))).astype(np.float32)

    k_real_cm = cm_block(center_real, config.n_real)
    k_real_prof = profiles.sample(rng, config.n_real, fake_like=False)
    k_fake_cm = cm_block(center_fake, config.n_seen_fake)
    k_fake_prof = profiles.sample(rng, config.n_seen_fake, fake_like=True)
    q_real_cm = cm_block(center_real, config.n_query_real)
    q_real_prof = profiles.sample(rng, config.n_query_real, fake_like=False)
    q_zd_cm = cm_block(center_zd, config.n_query_zeroday)
    q_zd_prof = profiles.sample(rng, config.n_query_zeroday, fake_like=True)

    midpoint = (center_real + center_fake) / 2.0
    arg_scale = _SCORE_STEEPNESS / (config.cluster_sep / 2.0)

    def scores_for(block: np.ndarray, miscalibration: float = 0.0) -> np.ndarray:
        arg = ((block.astype(np.float64) - midpoint) @ u_axis) * arg_scale
        arg *= 1.0 - 2.0 * miscalibration
        return np.clip(_logistic(arg), *_SCORE_CLAMP)

    entries: list[KnowledgeEntry] = []
    next_id = 0
    for block_cm, block_prof, label in (
        (k_real_cm, k_real_prof, 0),
        (k_fake_cm, k_fake_prof, 1),
    ):
        for row_cm, row_prof, s in zip(block_cm, block_prof, scores_for(block_cm)):
            entries.append(
                KnowledgeEntry(id=next_id, cm=row_cm, prof=row_prof, label=label, score=float(s))
            )
            next_id += 1

    queries: list[QueryRecord] = []
    next_id = 0
    for block_cm, block_prof, label, miscal in (
        (q_real_cm, q_real_prof, 0, 0.0),
        (q_zd_cm, q_zd_prof, 1, config.score_miscalibration),
    ):
        for row_cm, row_prof, s in zip(block_cm, block_prof, scores_for(block_cm, miscal)):
            queries.append(
                QueryRecord(id=next_id, cm=row_cm, prof=row_prof, score=float(s), label=label)
            )
            next_id += 1

    return entries, queries
