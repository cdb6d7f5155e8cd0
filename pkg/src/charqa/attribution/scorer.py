"""Quote-mention compatibility network.

A frozen hashed-embedding context encoder produces one vector per segment
position (neighborhood mean plus a relative-position tag). A one-hidden-layer
relu network scores each candidate from ``[H[quote] | h_mention]``, optionally
extended with ``[v_character | u_quote]``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import derive_rng
from .context import ALTQUOTE_TOKEN, QUOTE_TOKEN, CandidateMention, ContextSegment

CONTEXT, AUGMENTED = "context", "augmented"
FIRST_LAST, MEAN = "first-last", "mean"
MODEL_MAGIC = b"QASCR1"
# signed offset from the [QUOTE] position -> bucket
POSITION_EDGES = (-50, -20, -10, -5, -3, -2, -1, 0, 1, 2, 3, 5, 10, 20, 50)


@dataclass
class ScorerConfig:
    arity: str = CONTEXT
    window: int = 100
    hidden: int = 512
    emb_dim: int = 64
    vocab_buckets: int = 4096
    radius: int = 5
    mention_mode: str = FIRST_LAST
    char_dim: int = 512
    lr: float = 5e-6
    epochs: int = 20
    batch_size: int = 1
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.arity not in (CONTEXT, AUGMENTED):
            raise ValueError(f"unknown arity {self.arity!r}")
        if self.mention_mode not in (FIRST_LAST, MEAN):
            raise ValueError(f"unknown mention mode {self.mention_mode!r}")

    @property
    def token_dim(self) -> int:
        return self.emb_dim + len(POSITION_EDGES) + 1

    @property
    def context_dim(self) -> int:
        per_mention = 2 if self.mention_mode == FIRST_LAST else 1
        return self.token_dim * (1 + per_mention)

    @property
    def extra_dim(self) -> int:
        return 2 * self.char_dim if self.arity == AUGMENTED else 0


class ScorerModel:
    def __init__(self, config: ScorerConfig | None = None, params: dict | None = None,
                 embeddings: np.ndarray | None = None):
        self.config = cfg = config or ScorerConfig()
        if embeddings is None:
            rng = derive_rng(cfg.seed, "token-embeddings")
            embeddings = rng.standard_normal((cfg.vocab_buckets + 2, cfg.emb_dim)) / np.sqrt(cfg.emb_dim)
        self.embeddings = np.asarray(embeddings, dtype=np.float64)
        if params is None:
            params = self._init_params(derive_rng(cfg.seed, "phi"))
        self.params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
        self._check()

    def _init_params(self, rng) -> dict:
        cfg = self.config
        fan_in = cfg.context_dim + cfg.extra_dim
        scale = np.sqrt(2.0 / fan_in)
        p = {
            "W1": rng.standard_normal((cfg.hidden, cfg.context_dim)) * scale,
            "b1": np.zeros(cfg.hidden),
            "w2": rng.standard_normal(cfg.hidden) / np.sqrt(cfg.hidden),
            "b2": np.zeros(1),
        }
        if cfg.arity == AUGMENTED:
            p["W1x"] = rng.standard_normal((cfg.hidden, cfg.extra_dim)) * scale
        return p

    def _check(self):
        cfg = self.config
        shapes = {"W1": (cfg.hidden, cfg.context_dim), "b1": (cfg.hidden,), "w2": (cfg.hidden,), "b2": (1,)}
        if cfg.arity == AUGMENTED:
            shapes["W1x"] = (cfg.hidden, cfg.extra_dim)
        if set(shapes) != set(self.params):
            raise ValueError(f"parameters {sorted(self.params)} do not match arity {cfg.arity!r}")
        for k, shp in shapes.items():
            if self.params[k].shape != shp:
                raise ValueError(f"{k} has shape {self.params[k].shape}, expected {shp}")
            if not np.all(np.isfinite(self.params[k])):
                raise ValueError(f"{k} has non-finite values")

    @property
    def arity(self) -> str:
        return self.config.arity

    def copy(self) -> "ScorerModel":
        return ScorerModel(ScorerConfig(**asdict(self.config)),
                           {k: v.copy() for k, v in self.params.items()}, self.embeddings.copy())

    # -- encoder -----------------------------------------------------------

    def token_ids(self, tokens) -> np.ndarray:
        V = self.config.vocab_buckets
        out = np.empty(len(tokens), dtype=np.int64)
        for i, t in enumerate(tokens):
            if t == QUOTE_TOKEN:
                out[i] = V
            elif t == ALTQUOTE_TOKEN:
                out[i] = V + 1
            else:
                out[i] = zlib.crc32(t.lower().encode("utf-8")) % V
        return out


def encode_context(scorer: ScorerModel, segment: ContextSegment) -> np.ndarray:
    """Per-position representations ``H`` (positions x token_dim).

    Lexical part: mean token embedding over positions within ``radius``
    (clipped at the segment edges). Tag part: one-hot bucket of the signed
    offset from the ``[QUOTE]`` position.
    """
    cfg = scorer.config
    E = scorer.embeddings[scorer.token_ids(segment.tokens)]
    L = len(segment.tokens)
    csum = np.vstack([np.zeros((1, E.shape[1])), np.cumsum(E, axis=0)])
    idx = np.arange(L)
    lo = np.maximum(idx - cfg.radius, 0)
    hi = np.minimum(idx + cfg.radius, L - 1)
    lex = (csum[hi + 1] - csum[lo]) / (hi - lo + 1)[:, None]
    offsets = idx - segment.quote_pos
    tags = np.zeros((L, len(POSITION_EDGES) + 1))
    tags[idx, np.searchsorted(POSITION_EDGES, offsets, side="right")] = 1.0
    return np.hstack([lex, tags])


def mention_repr(H: np.ndarray, span: tuple[int, int], mode: str = FIRST_LAST) -> np.ndarray:
    s, e = span
    if not (0 <= s <= e < len(H)):
        raise ValueError(f"span {span} outside segment of length {len(H)}")
    if mode == MEAN:
        return H[s:e + 1].mean(axis=0)
    if mode == FIRST_LAST:
        return np.concatenate([H[s], H[e]])
    raise ValueError(f"unknown mention mode {mode!r}")


def candidate_inputs(scorer: ScorerModel, H: np.ndarray, quote_pos: int,
                     candidates: list[CandidateMention], char_vectors=None, u_q=None):
    """Stack the network inputs of every candidate of one quote.

    Returns ``(Xc, Xa)``; ``Xa`` is ``None`` for the context-only arity.
    Characters missing from ``char_vectors`` get the zero vector.
    """
    cfg = scorer.config
    Xc = np.empty((len(candidates), cfg.context_dim))
    for r, c in enumerate(candidates):
        Xc[r] = np.concatenate([H[quote_pos], mention_repr(H, (c.start, c.end), cfg.mention_mode)])
    if cfg.arity == CONTEXT:
        if char_vectors is not None or u_q is not None:
            raise ValueError("context-only scorer takes no character or quote vectors")
        return Xc, None
    if char_vectors is None or u_q is None:
        raise ValueError("augmented scorer needs character and quote vectors")
    u = np.asarray(u_q, dtype=np.float64)
    if u.shape != (cfg.char_dim,):
        raise ValueError(f"quote vector has shape {u.shape}, expected ({cfg.char_dim},)")
    zero = np.zeros(cfg.char_dim)
    Xa = np.empty((len(candidates), cfg.extra_dim))
    for r, c in enumerate(candidates):
        v = np.asarray(char_vectors.get(c.entity_id, zero), dtype=np.float64)
        if v.shape != (cfg.char_dim,):
            raise ValueError(f"character vector for {c.entity_id!r} has shape {v.shape}")
        Xa[r, :cfg.char_dim] = v
        Xa[r, cfg.char_dim:] = u
    return Xc, Xa


# -- network ---------------------------------------------------------------

def forward(params: dict, Xc: np.ndarray, Xa: np.ndarray | None = None):
    """Scores for each row plus the cache needed by :func:`backward`."""
    pre = Xc @ params["W1"].T
    if Xa is not None:
        pre = pre + Xa @ params["W1x"].T
    pre = pre + params["b1"]
    h = np.maximum(pre, 0.0)
    s = h @ params["w2"] + params["b2"][0]
    return s, (Xc, Xa, pre, h)


def backward(params: dict, cache, ds: np.ndarray) -> dict:
    Xc, Xa, pre, h = cache
    grads = {"w2": h.T @ ds, "b2": np.array([ds.sum()])}
    dpre = np.outer(ds, params["w2"]) * (pre > 0)
    grads["W1"] = dpre.T @ Xc
    grads["b1"] = dpre.sum(axis=0)
    if Xa is not None:
        grads["W1x"] = dpre.T @ Xa
    return grads


def score_candidates(scorer: ScorerModel, Xc, Xa=None) -> np.ndarray:
    return forward(scorer.params, Xc, Xa)[0]


def score(scorer: ScorerModel, H: np.ndarray, candidate: CandidateMention, quote_pos: int,
          v_entity=None, u_q=None) -> float:
    """``phi`` of one candidate. Pass ``v_entity``/``u_q`` only when augmented;
    a character without a vector should be given the zero vector."""
    chars = None if v_entity is None else {candidate.entity_id: v_entity}
    Xc, Xa = candidate_inputs(scorer, H, quote_pos, [candidate], chars, u_q)
    return float(score_candidates(scorer, Xc, Xa)[0])


def log_softmax(s: np.ndarray) -> np.ndarray:
    m = s.max()
    return s - (m + np.log(np.exp(s - m).sum()))


def quote_loss(params: dict, Xc, Xa, positive: np.ndarray):
    """Negative log of the total softmax mass on the positive candidates."""
    s, cache = forward(params, Xc, Xa)
    logp = log_softmax(s)
    lp = logp[positive]
    m = lp.max()
    log_pos = m + np.log(np.exp(lp - m).sum())
    p = np.exp(logp)
    post = np.zeros_like(p)
    post[positive] = np.exp(lp - log_pos)
    ds = p - post
    return float(-log_pos), backward(params, cache, ds)


@dataclass
class Adam:
    lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def update(self, params: dict, grads: dict):
        self.step += 1
        b1, b2 = self.betas
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            upd = (m / (1 - b1 ** self.step)) / (np.sqrt(v / (1 - b2 ** self.step)) + self.eps)
            if self.weight_decay:
                upd = upd + self.weight_decay * params[k]
            params[k] -= self.lr * upd


# -- files -----------------------------------------------------------------

_ORDER = ("W1", "b1", "w2", "b2", "W1x")


def save_scorer(scorer: ScorerModel, path) -> None:
    cfg = scorer.config
    header = json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<B", 1 if cfg.arity == AUGMENTED else 0))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        arrays = [("E", scorer.embeddings)] + [(k, scorer.params[k]) for k in _ORDER if k in scorer.params]
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays:
            arr = np.atleast_2d(arr) if arr.ndim == 1 else arr
            fh.write(struct.pack("<4sII", name.encode().ljust(4), *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_scorer(path) -> ScorerModel:
    raw = Path(path).read_bytes()
    if raw[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a scorer model file")
    off = len(MODEL_MAGIC)
    (flag,) = struct.unpack_from("<B", raw, off)
    off += 1
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    cfg = ScorerConfig(**json.loads(raw[off:off + hlen]))
    off += hlen
    if (cfg.arity == AUGMENTED) != bool(flag):
        raise ValueError(f"{path}: arity flag disagrees with header")
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    arrays = {}
    for _ in range(count):
        name, r, c = struct.unpack_from("<4sII", raw, off)
        off += 12
        arr = np.frombuffer(raw, dtype="<f4", count=r * c, offset=off).reshape(r, c).astype(np.float64)
        off += 4 * r * c
        arrays[name.decode().strip()] = arr
    emb = arrays.pop("E")
    params = {k: (v.ravel() if k in ("b1", "w2", "b2") else v) for k, v in arrays.items()}
    return ScorerModel(cfg, params, emb)
