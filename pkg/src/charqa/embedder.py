"""Collection embeddings: a linear projection of hashed stylometric features,
trained with a supervised contrastive loss whose negatives never leave the
segment an anchor comes from."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Sequence
from urllib.parse import quote, unquote

import numpy as np
import scipy.sparse as sp

from .dataset import UtteranceCollection, build_train_instances, derive_rng
from .features import FeatureConfig, FeatureExtractor

log = logging.getLogger(__name__)

COLLECTION, MEAN_POOL = "collection", "mean-pool"
MODEL_MAGIC = b"QAEMB1"
DEFAULT_DIM = 512


class EmbeddingModel:
    """Hashed features -> ``d x F`` projection -> unit vector.

    The projection is held transposed (``weights``, shape ``F x d``) so that
    the rows touched by a sparse batch are contiguous.

    ``init_scale`` is the std of the random initial projection. Cosine
    geometry does not depend on it, but it fixes how far a given number of
    optimizer steps moves the weights relative to their starting point.
    """

    def __init__(self, config: FeatureConfig | None = None, dim: int = DEFAULT_DIM,
                 mode: str = COLLECTION, seed: int = 0, init_scale: float = 1e-3,
                 projection: np.ndarray | None = None):
        if mode not in (COLLECTION, MEAN_POOL):
            raise ValueError(f"unknown mode {mode!r}")
        self.config = config or FeatureConfig()
        self.mode = mode
        if projection is None:
            rng = derive_rng(seed, "projection")
            weights = rng.standard_normal((self.config.n_features, dim)) * init_scale
        else:
            projection = np.asarray(projection, dtype=np.float64)
            if projection.ndim != 2 or projection.shape[1] != self.config.n_features:
                raise ValueError(f"projection shape {projection.shape} does not match "
                                 f"{self.config.n_features} features")
            weights = np.ascontiguousarray(projection.T)
        if not np.all(np.isfinite(weights)):
            raise ValueError("projection has non-finite weights")
        self.weights = weights
        self.extractor = FeatureExtractor(self.config)

    @property
    def projection(self) -> np.ndarray:
        return self.weights.T

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.config, mode=self.mode, projection=self.projection.copy())

    def _project(self, idx: np.ndarray, val: np.ndarray) -> np.ndarray:
        if idx.size == 0:
            return np.zeros(self.dim)
        return _unit(val @ self.weights[idx] / np.linalg.norm(val))

    def encode_texts(self, texts: Sequence[str]) -> np.ndarray:
        if len(texts) == 0:
            raise ValueError("cannot encode an empty collection")
        X = self.extractor.matrix(texts)
        if self.mode == COLLECTION:
            x = X.sum(axis=0).A1
            idx = np.flatnonzero(x)
            return self._project(idx, x[idx])
        per = [self._project(X.indices[X.indptr[i]:X.indptr[i + 1]], X.data[X.indptr[i]:X.indptr[i + 1]])
               for i in range(X.shape[0])]
        per = [v for v in per if np.any(v)]
        if not per:
            return np.zeros(self.dim)
        return _unit(np.mean(per, axis=0))

    def encode_collection(self, collection) -> np.ndarray:
        texts = collection.texts if isinstance(collection, UtteranceCollection) else list(collection)
        return self.encode_texts(texts)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else np.zeros_like(v)


def encode_collection(model, collection) -> np.ndarray:
    """Unit vector for a collection (zero vector when it has no features)."""
    return model.encode_collection(collection)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def supcon_loss(embeddings, labels: Sequence[Hashable], temperature: float = 0.1,
                groups: Sequence[Hashable] | None = None) -> tuple[float, np.ndarray]:
    """Multi-positive supervised contrastive loss and its gradient.

    For anchor ``i`` the candidates are all other embeddings sharing its
    group; positives are candidates with the same label. Per anchor the
    log-softmax of the positives is averaged, then anchors are averaged.
    Anchors without a positive are left out. Similarities are raw dot
    products of the given (unit) vectors.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    E = np.asarray(embeddings, dtype=np.float64)
    n = E.shape[0]
    lab = np.asarray(_codes(labels))
    grp = np.zeros(n, dtype=np.int64) if groups is None else np.asarray(_codes(groups))
    cand = (grp[:, None] == grp[None, :]) & ~np.eye(n, dtype=bool)
    pos = cand & (lab[:, None] == lab[None, :])
    npos = pos.sum(axis=1)
    anchors = np.flatnonzero(npos > 0)
    if anchors.size == 0:
        raise ValueError("no anchor has a positive")

    S = E @ E.T / temperature
    masked = np.where(cand, S, -np.inf)
    rowmax = np.max(masked, axis=1, keepdims=True)
    rowmax[~np.isfinite(rowmax)] = 0.0
    expd = np.where(cand, np.exp(masked - rowmax), 0.0)
    denom = expd.sum(axis=1, keepdims=True)
    log_denom = np.log(np.where(denom > 0, denom, 1.0)) + rowmax
    logp = S - log_denom

    a = anchors
    per_anchor = -(np.where(pos[a], logp[a], 0.0).sum(axis=1) / npos[a])
    loss = float(per_anchor.mean())

    G = np.zeros((n, n))
    soft = expd[a] / denom[a]
    G[a] = (soft - pos[a] / npos[a, None]) / a.size
    grad = (G + G.T) @ E / temperature
    return loss, grad


def _codes(values) -> list[int]:
    table: dict = {}
    return [table.setdefault(v, len(table)) for v in values]


@dataclass
class TrainConfig:
    split_mode: str = "scene"  # scene | play
    lr: float = 2e-5
    epochs: int = 20
    optimizer: str = "adam"  # adam | sgd
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_segments: int | None = None  # None: 8 scenes or 1 play
    temperature: float = 0.1
    momentum: float = 0.0
    weight_decay: float = 0.0
    warmup_steps: int = 0
    seed: int = 0

    def segments_per_batch(self) -> int:
        if self.batch_segments:
            return self.batch_segments
        return 8 if self.split_mode == "scene" else 1


@dataclass
class TrainResult:
    model: EmbeddingModel
    loss_history: list[float] = field(default_factory=list)
    steps: int = 0


def collection_matrix(extractor: FeatureExtractor, collections) -> sp.csr_matrix:
    """Row-normalized summed features, one row per collection of texts."""
    texts, owner = [], []
    for k, coll in enumerate(collections):
        texts.extend(coll)
        owner.extend([k] * len(coll))
    U = extractor.matrix(texts)
    A = sp.csr_matrix((np.ones(len(owner)), (owner, np.arange(len(owner)))),
                      shape=(len(collections), len(owner)))
    X = (A @ U).tocsr()
    X.sum_duplicates()
    norms = np.sqrt(X.multiply(X).sum(axis=1)).A1
    norms[norms == 0] = 1.0
    return sp.diags(1.0 / norms) @ X


def _batch_step(model: EmbeddingModel, instances, temperature: float):
    """Loss and row-sparse gradient (rows ``cols`` of ``weights``) for a batch."""
    colls, labels, groups = [], [], []
    for inst in instances:
        for coll in (inst.query, inst.target):
            colls.append(coll.texts)
            labels.append((inst.segment_id, inst.character_id))
            groups.append(inst.segment_id)
    X = collection_matrix(model.extractor, colls).tocsc()
    cols = np.flatnonzero(np.diff(X.indptr))
    Xc = X[:, cols].toarray()
    Z = Xc @ model.weights[cols]
    zn = np.linalg.norm(Z, axis=1, keepdims=True)
    zn[zn == 0] = 1.0
    E = Z / zn
    loss, dE = supcon_loss(E, labels, temperature, groups)
    dZ = (dE - E * np.sum(dE * E, axis=1, keepdims=True)) / zn
    return loss, cols, Xc.T @ dZ


def train(model: EmbeddingModel, segments, config: TrainConfig | None = None) -> TrainResult:
    """Mini-batch optimization of the projection (Adam by default, or SGD).

    Each epoch redraws 8/8 query/target samples per character, shuffles the
    segments, and takes one step per batch (8 scenes, or one play).
    """
    config = config or TrainConfig()
    if model.mode != COLLECTION:
        raise ValueError("training is only defined for collection mode")
    segments = sorted(segments, key=lambda s: s.id)
    usable = [s for s in segments if len(build_train_instances(s, config.seed, 0)) >= 1]
    if not usable:
        raise ValueError("no character with enough lines to build train instances")
    model = model.copy()
    result = TrainResult(model)
    if config.optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    adam = config.optimizer == "adam"
    W = model.weights
    first = np.zeros_like(W) if (config.momentum or adam) else None
    second = np.zeros_like(W) if adam else None
    per_batch = config.segments_per_batch()
    step = 0
    for epoch in range(config.epochs):
        order = derive_rng(config.seed, "epoch-order", epoch).permutation(len(usable))
        losses = []
        for b in range(0, len(order), per_batch):
            instances = []
            for i in order[b:b + per_batch]:
                instances.extend(build_train_instances(usable[i], config.seed, epoch))
            loss, rows, grad = _batch_step(model, instances, config.temperature)
            losses.append(loss)
            lr = config.lr
            if config.warmup_steps and step < config.warmup_steps:
                lr *= (step + 1) / config.warmup_steps
            step += 1
            if adam:
                # lazy Adam: moments of rows absent from the batch are not decayed
                b1, b2 = config.betas
                m = b1 * first[rows] + (1 - b1) * grad
                v = b2 * second[rows] + (1 - b2) * grad * grad
                first[rows], second[rows] = m, v
                update = (m / (1 - b1 ** step)) / (np.sqrt(v / (1 - b2 ** step)) + config.eps)
                if config.weight_decay:
                    update += config.weight_decay * W[rows]
            else:
                update = grad
                if config.weight_decay:
                    update = update + config.weight_decay * W[rows]
                if config.momentum:
                    update = config.momentum * first[rows] + update
                    first[rows] = update
            W[rows] -= lr * update
        mean = float(np.mean(losses)) if losses else float("nan")
        result.loss_history.append(mean)
        log.info("epoch %d loss %.5f", epoch, mean)
    result.steps = step
    return result


# ----------------------------------------------------------------------------
# files

def save_vectors(vectors: dict[str, np.ndarray], path) -> None:
    """Write ``dim N`` then one ``id v_1 .. v_N`` line per vector."""
    items = sorted(vectors.items())
    dims = {np.asarray(v).shape for _, v in items}
    if len(dims) > 1:
        raise ValueError(f"vectors have mixed shapes {sorted(dims)}")
    dim = dims.pop()[0] if dims else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim {dim}\n")
        for key, vec in items:
            vals = " ".join(format(float(x), ".9g") for x in np.asarray(vec, dtype=np.float32))
            fh.write(f"{quote(key, safe='|:/._-')} {vals}\n")


def load_vectors(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or header[0] != "dim":
            raise ValueError(f"{path}: first line must be 'dim N'")
        dim = int(header[1])
        for lineno, line in enumerate(fh, 2):
            parts = line.split()
            if not parts:
                continue
            key = unquote(parts[0])
            if len(parts) - 1 != dim:
                raise ValueError(f"{path}:{lineno}: {key!r} has {len(parts) - 1} values, header says {dim}")
            if key in out:
                raise ValueError(f"{path}:{lineno}: duplicate id {key!r}")
            out[key] = np.array([float(x) for x in parts[1:]], dtype=np.float64)
    return out


class VectorTable:
    """Stand-in encoder backed by precomputed vectors keyed by collection key.

    Unknown keys map to the zero vector.
    """

    def __init__(self, vectors: dict[str, np.ndarray]):
        self.vectors = vectors
        self.dim = len(next(iter(vectors.values()))) if vectors else 0

    def lookup(self, key: str) -> np.ndarray:
        v = self.vectors.get(key)
        return np.zeros(self.dim) if v is None else v

    def encode_collection(self, collection) -> np.ndarray:
        return self.lookup(collection.key)


def save_model(model: EmbeddingModel, path) -> None:
    header = json.dumps({"config": model.config.to_dict(), "mode": model.mode}, sort_keys=True).encode("utf-8")
    d, F = model.projection.shape
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<II", d, F))
        fh.write(model.projection.astype("<f4").tobytes(order="C"))


def load_model(path) -> EmbeddingModel:
    raw = Path(path).read_bytes()
    if raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValueError(f"{path}: not an embedding model file")
    off = len(MODEL_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off:off + hlen])
    off += hlen
    d, F = struct.unpack_from("<II", raw, off)
    off += 8
    W = np.frombuffer(raw, dtype="<f4", count=d * F, offset=off).reshape(d, F)
    return EmbeddingModel(FeatureConfig.from_dict(header["config"]), mode=header["mode"],
                          projection=W.astype(np.float64))
