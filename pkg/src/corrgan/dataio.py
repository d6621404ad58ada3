"""Data ingestion, preprocessing, synthetic data, and checkpoints.

Covers the profile JSON pipeline (clean, dictionary, vectorize), the IDX
image loader with binarization, a ground-truth synthetic correlated
dataset that stands in for the private profile corpus, and a
self-describing binary checkpoint format for trained model bundles.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corrnn import CorrNnParams
from .nn import DenseLayer, Mlp, make_rng

MAX_SKILL_LEN = 15

CHECKPOINT_MAGIC = b"CGAN"
CHECKPOINT_VERSION = 1


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class ProfileRecord:
    profession: str
    skills: list[str]


@dataclass
class TokenDictionary:
    """Lexicographically sorted unique tokens with their index map."""

    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def from_tokens(cls, tokens) -> "TokenDictionary":
        return cls(sorted(set(tokens)))

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


@dataclass
class EncodedDataset:
    """Binary skill matrix X, one-hot profession matrix Y, and dictionaries."""

    X: np.ndarray
    Y: np.ndarray
    skills: TokenDictionary
    professions: TokenDictionary

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class SynthSpec:
    """Recipe for a synthetic correlated dataset with known ground truth."""

    n_professions: int = 6
    n_skills: int = 64
    pool_size: int = 8
    in_pool_prob: float = 0.8
    background_prob: float = 0.05
    n_samples: int = 5000
    seed: int = 0

    def validate(self) -> None:
        if min(self.n_professions, self.n_skills, self.pool_size, self.n_samples) < 1:
            raise DataError("all synthetic counts must be >= 1")
        if self.pool_size > self.n_skills:
            raise DataError("pool_size cannot exceed n_skills")
        for name in ("in_pool_prob", "background_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value}")


def load_profiles(path) -> list[ProfileRecord]:
    """Parse the profile JSON array verbatim; no cleaning happens here.

    Schema: [{"profession": str, "skills": [str, ...]}, ...]
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(
            f"malformed JSON in {path} at byte offset {exc.pos}: {exc.msg}"
        ) from exc
    if not isinstance(data, list):
        raise DataError(f"{path}: top level must be a JSON array of profiles")
    records = []
    for i, row in enumerate(data):
        if not isinstance(row, dict):
            raise DataError(f"{path}: record {i} is not an object")
        for key in ("profession", "skills"):
            if key not in row:
                raise DataError(f"{path}: record {i} is missing key {key!r}")
        if not isinstance(row["profession"], str):
            raise DataError(f"{path}: record {i} profession must be a string")
        skills = row["skills"]
        if not isinstance(skills, list) or not all(isinstance(s, str) for s in skills):
            raise DataError(f"{path}: record {i} skills must be a list of strings")
        records.append(ProfileRecord(row["profession"], list(skills)))
    return records


def preprocess_profiles(
    records: list[ProfileRecord],
) -> tuple[list[ProfileRecord], dict[str, int]]:
    """Lowercase/trim tokens and drop unusable profiles.

    A profile is dropped when any cleaned skill token exceeds 15 characters
    (narrative text in the skill field), when its skill list is empty, or
    when its profession is empty. The report counts each cause.
    """
    kept = []
    drops = {"long_skill": 0, "empty_skills": 0, "empty_profession": 0}
    for rec in records:
        profession = rec.profession.strip().lower()
        skills = [s.strip().lower() for s in rec.skills]
        skills = [s for s in skills if s]
        if not profession:
            drops["empty_profession"] += 1
            continue
        if any(len(s) > MAX_SKILL_LEN for s in skills):
            drops["long_skill"] += 1
            continue
        if not skills:
            drops["empty_skills"] += 1
            continue
        kept.append(ProfileRecord(profession, skills))
    return kept, drops


def build_dictionaries(
    records: list[ProfileRecord],
) -> tuple[TokenDictionary, TokenDictionary]:
    """Sorted unions of all skills and all professions."""
    if not records:
        raise DataError("cannot build dictionaries from an empty corpus")
    skills = TokenDictionary.from_tokens(s for r in records for s in r.skills)
    professions = TokenDictionary.from_tokens(r.profession for r in records)
    return skills, professions


def corpus_stats(records: list[ProfileRecord]) -> dict:
    """Summary table of a cleaned corpus (counts and skills-per-profile)."""
    skills, professions = build_dictionaries(records)
    per_profile = [len(set(r.skills)) for r in records]
    per_prof: dict[str, int] = {}
    for r in records:
        per_prof[r.profession] = per_prof.get(r.profession, 0) + 1
    return {
        "total_profiles": len(records),
        "total_skills": len(skills),
        "total_professions": len(professions),
        "max_skills_per_profile": max(per_profile),
        "min_skills_per_profile": min(per_profile),
        "median_skills_per_profile": float(np.median(per_profile)),
        "max_profiles_per_profession": max(per_prof.values()),
        "min_profiles_per_profession": min(per_prof.values()),
    }


def vectorize_profiles(
    records: list[ProfileRecord],
    skills: TokenDictionary,
    professions: TokenDictionary,
) -> EncodedDataset:
    """Binary skill vectors and one-hot profession vectors, row order kept."""
    X = np.zeros((len(records), len(skills)))
    Y = np.zeros((len(records), len(professions)))
    for i, rec in enumerate(records):
        if rec.profession not in professions:
            raise DataError(
                f"record {i}: profession {rec.profession!r} not in dictionary"
            )
        Y[i, professions.index[rec.profession]] = 1.0
        for s in rec.skills:
            if s not in skills:
                raise DataError(f"record {i}: skill {s!r} not in dictionary")
            X[i, skills.index[s]] = 1.0
    return EncodedDataset(X, Y, skills, professions)


def decode_by_dictionary(x_row: np.ndarray, skills: TokenDictionary) -> list[str]:
    """Skill tokens active in one binary row, in dictionary order."""
    return [skills.tokens[k] for k in np.flatnonzero(np.asarray(x_row))]


_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def load_mnist(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """IDX-format image/label pair -> (n x 784 floats in [0,1], n labels)."""
    with open(images_path, "rb") as fh:
        magic, n, rows, cols = struct.unpack(">IIII", fh.read(16))
        if magic != _IDX_IMAGE_MAGIC:
            raise DataError(
                f"{images_path}: bad image magic 0x{magic:08x}, "
                f"expected 0x{_IDX_IMAGE_MAGIC:08x}"
            )
        buf = fh.read(n * rows * cols)
        if len(buf) != n * rows * cols:
            raise DataError(f"{images_path}: truncated image data")
        images = np.frombuffer(buf, dtype=np.uint8).astype(np.float64) / 255.0
        images = images.reshape(n, rows * cols)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", fh.read(8))
        if magic != _IDX_LABEL_MAGIC:
            raise DataError(
                f"{labels_path}: bad label magic 0x{magic:08x}, "
                f"expected 0x{_IDX_LABEL_MAGIC:08x}"
            )
        buf = fh.read(n_labels)
        if len(buf) != n_labels:
            raise DataError(f"{labels_path}: truncated label data")
        labels = np.frombuffer(buf, dtype=np.uint8).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels"
        )
    return images, labels


def binarize_images(images: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """value >= threshold -> 1 else 0 (ties go to 1)."""
    images = np.asarray(images, dtype=np.float64)
    return (images >= threshold).astype(np.float64)


def split_image_halves(images: np.ndarray, side: int = 28) -> tuple[np.ndarray, np.ndarray]:
    """Top and bottom halves of row-major flattened square images."""
    images = np.asarray(images, dtype=np.float64)
    half = (side * side) // 2
    if images.shape[1] != side * side:
        raise DataError(f"expected {side * side} pixels per image")
    return images[:, :half], images[:, half:]


def synth_correlated_dataset(spec: SynthSpec) -> tuple[EncodedDataset, list[np.ndarray]]:
    """Sample a dataset with planted per-profession skill pools.

    Each sample draws its profession uniformly, then activates pool skills
    with in_pool_prob and every other skill with background_prob. The
    returned pools (sorted index arrays, one per profession in dictionary
    order) are the ground truth for evaluation oracles.
    """
    spec.validate()
    rng = make_rng(spec.seed)
    sw = len(str(spec.n_skills - 1))
    pw = len(str(spec.n_professions - 1))
    skills = TokenDictionary([f"skill_{i:0{sw}d}" for i in range(spec.n_skills)])
    professions = TokenDictionary(
        [f"profession_{j:0{pw}d}" for j in range(spec.n_professions)]
    )
    pools = [
        np.sort(rng.choice(spec.n_skills, size=spec.pool_size, replace=False))
        for _ in range(spec.n_professions)
    ]
    prof = rng.integers(0, spec.n_professions, size=spec.n_samples)
    probs = np.full((spec.n_samples, spec.n_skills), spec.background_prob)
    for j, pool in enumerate(pools):
        rows = np.flatnonzero(prof == j)
        probs[np.ix_(rows, pool)] = spec.in_pool_prob
    X = (rng.random((spec.n_samples, spec.n_skills)) < probs).astype(np.float64)
    Y = np.zeros((spec.n_samples, spec.n_professions))
    Y[np.arange(spec.n_samples), prof] = 1.0
    return EncodedDataset(X, Y, skills, professions), pools


def dataset_to_profiles(dataset: EncodedDataset) -> list[ProfileRecord]:
    """Rows back to profile records (samples with no active skill included)."""
    records = []
    for i in range(len(dataset)):
        prof = dataset.professions.tokens[int(np.argmax(dataset.Y[i]))]
        records.append(ProfileRecord(prof, decode_by_dictionary(dataset.X[i], dataset.skills)))
    return records


@dataclass
class CheckpointBundle:
    """Everything needed to resume or generate: models, config, provenance."""

    corrnn: CorrNnParams
    generator: Mlp
    discriminator: Mlp
    cfg: dict
    epoch: int
    seed: int
    meta: dict = field(default_factory=dict)


def _mlp_tensors(prefix: str, net: Mlp):
    for i, layer in enumerate(net.layers):
        yield f"{prefix}.{i}.weights", layer.weights
        yield f"{prefix}.{i}.bias", layer.bias


def save_checkpoint(path, bundle: CheckpointBundle) -> None:
    """Single-file format: magic, u32 version, JSON header, raw tensors.

    The header names every tensor and its shape; tensor data is row-major
    little-endian float64 in header order, so load(save(b)) is bit-exact.
    """
    tensors = []
    for name in ("W", "V", "b", "W_dec", "V_dec", "b_dec"):
        tensors.append((f"corrnn.{name}", getattr(bundle.corrnn, name)))
    tensors.extend(_mlp_tensors("generator", bundle.generator))
    tensors.extend(_mlp_tensors("discriminator", bundle.discriminator))
    header = {
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
        "corrnn": {"f": bundle.corrnn.f, "g": bundle.corrnn.g},
        "generator": {"activations": [l.activation for l in bundle.generator.layers]},
        "discriminator": {
            "activations": [l.activation for l in bundle.discriminator.layers]
        },
        "cfg": bundle.cfg,
        "epoch": bundle.epoch,
        "seed": bundle.seed,
        "meta": bundle.meta,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _rebuild_mlp(section: dict, arrays: dict, prefix: str) -> Mlp:
    layers = []
    for i, act in enumerate(section["activations"]):
        layers.append(
            DenseLayer(arrays[f"{prefix}.{i}.weights"], arrays[f"{prefix}.{i}.bias"], act)
        )
    return Mlp(layers)


def load_checkpoint(path) -> CheckpointBundle:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DataError(
                f"{path}: checkpoint version {version}, "
                f"this build reads version {CHECKPOINT_VERSION}"
            )
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        arrays = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(
                    f"{path}: truncated tensor data for {spec['name']}"
                )
            arrays[spec["name"]] = (
                np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            )
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after tensor data")
    try:
        corrnn = CorrNnParams(
            arrays["corrnn.W"],
            arrays["corrnn.V"],
            arrays["corrnn.b"],
            arrays["corrnn.W_dec"],
            arrays["corrnn.V_dec"],
            arrays["corrnn.b_dec"],
            header["corrnn"]["f"],
            header["corrnn"]["g"],
        )
        generator = _rebuild_mlp(header["generator"], arrays, "generator")
        discriminator = _rebuild_mlp(header["discriminator"], arrays, "discriminator")
    except KeyError as exc:
        raise DataError(f"{path}: header is missing tensor {exc}") from exc
    if corrnn.W.shape[0] != corrnn.W_dec.shape[1]:
        raise DataError(f"{path}: inconsistent encoder/decoder shapes")
    return CheckpointBundle(
        corrnn=corrnn,
        generator=generator,
        discriminator=discriminator,
        cfg=header["cfg"],
        epoch=header["epoch"],
        seed=header["seed"],
        meta=header.get("meta", {}),
    )
