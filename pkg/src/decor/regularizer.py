"""Delayed-codebook regularization.

At each task boundary the frozen encoder makes one pass over the upcoming
task's data ("epoch 0"), the features are clustered into K codes, and the
codebook is immediately discarded: only the per-sample nearest-code index
survives, keyed by sample id. During the next task a freshly initialized
index-prediction head is trained jointly with the encoder to classify each
sample into its stored index, which transfers knowledge from the previous
model without keeping any copy of it.

The serialized state is a compact binary record:

    offset 0   magic  b"DCIX"
    offset 4   version u8 (currently 1)
    offset 5   K       u32 little-endian
    offset 9   N       u32 little-endian
    offset 13  payload ceil(N * b / 8) bytes, b = ceil(log2 K)

Payload bits are index values in ascending sample-id order, b bits each,
least-significant bit first. Code vectors are never stored anywhere.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, ShapeError, StateError
from .kmeans import IndexAssignment, kmeans_fit

STATE_MAGIC = b"DCIX"
STATE_VERSION = 1
HEADER_BYTES = 13
UNPACKED_INDEX_BITS = 64  # width of one stored machine integer


@dataclass(frozen=True)
class PredictorConfig:
    """Shape of the index-prediction head.

    L=1 is a single linear map onto the K codes; L>=2 inserts L-1 rectifier
    hidden layers of `hidden_dim`.
    """

    L: int = 2
    hidden_dim: int = 128
    K: int = 32

    def __post_init__(self) -> None:
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.hidden_dim < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")
        if self.K < 2:
            raise ConfigError(f"K must be >= 2, got {self.K}")


@dataclass
class DecorState:
    """Per-sample quantization indices kept between task boundaries.

    Inactive before the first boundary. The codebook that produced the
    indices is intentionally absent: nothing here references code vectors
    or any previous model parameters.
    """

    indices: IndexAssignment | None
    sample_ids: np.ndarray | None
    K: int
    active: bool
    _lookup: dict[int, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.active:
            return
        if self.indices is None or self.sample_ids is None:
            raise StateError("active state requires indices and sample ids")
        self.sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if self.sample_ids.shape != self.indices.indices.shape:
            raise ShapeError("sample_ids and indices differ in length")
        if len(set(self.sample_ids.tolist())) != self.sample_ids.size:
            raise ConfigError("sample ids must be unique")
        if self.K != self.indices.K:
            raise ConfigError("state K does not match assignment K")
        self._lookup = {
            int(s): int(i) for s, i in zip(self.sample_ids, self.indices.indices)
        }

    @classmethod
    def inactive(cls) -> "DecorState":
        return cls(indices=None, sample_ids=None, K=0, active=False)

    def __len__(self) -> int:
        return 0 if not self.active else self.sample_ids.size

    def index_for(self, sample_ids) -> np.ndarray:
        """Stored pseudo-labels for a batch of sample ids (any order)."""
        if not self.active:
            raise StateError("state is inactive (no boundary has run yet)")
        out = np.empty(len(sample_ids), dtype=np.int64)
        for row, sid in enumerate(sample_ids):
            key = int(sid)
            if key not in self._lookup:
                raise KeyError(f"sample id {key} has no stored index")
            out[row] = self._lookup[key]
        return out


def increment(
    encoder: nn.Network,
    new_task_inputs: np.ndarray,
    K: int,
    seed: int,
    sample_ids=None,
) -> DecorState:
    """Boundary step: encode, cluster, keep only the indices.

    One forward pass over the raw task inputs (no augmentation) with the
    encoder untouched; the fitted codebook is dropped on return.
    """
    x = np.asarray(new_task_inputs, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"inputs must be 2-D, got shape {x.shape}")
    if x.shape[0] < K:
        raise ConfigError(f"need at least K={K} samples, got {x.shape[0]}")
    if sample_ids is None:
        sample_ids = np.arange(x.shape[0], dtype=np.int64)
    features = nn.forward(encoder, x)
    _, assignment = kmeans_fit(features, K, seed=seed)
    return DecorState(indices=assignment, sample_ids=sample_ids, K=K, active=True)


def init_index_predictor(cfg: PredictorConfig, in_dim: int, seed: int) -> nn.Network:
    """Fresh predictor head; re-initialized at every task boundary."""
    if in_dim < 1:
        raise ConfigError(f"in_dim must be >= 1, got {in_dim}")
    if cfg.L == 1:
        dims = [in_dim, cfg.K]
    else:
        dims = [in_dim] + [cfg.hidden_dim] * (cfg.L - 1) + [cfg.K]
    return nn.init_network(dims, seed)


def distill_loss(predictor_logits: np.ndarray, state: DecorState, sample_ids):
    """Mean cross-entropy of predictor logits against stored indices.

    The signature admits no model parameters: the only teacher signal is
    the index table inside `state`. Returns (loss, dlogits).
    """
    if not state.active:
        raise StateError("distillation requires an active state")
    z = np.asarray(predictor_logits, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != state.K:
        raise ShapeError(f"logits shape {z.shape} does not match K={state.K}")
    targets = state.index_for(sample_ids)
    return nn.mean_cross_entropy(z, targets)


def combined_loss_supervised(ce: float, pd: float, lam: float, first_task: bool) -> float:
    """Task loss: ce on the first task, ce + lam * pd afterwards."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    return float(ce) if first_task else float(ce) + lam * float(pd)


def combined_loss_ssl(ssl: float, pd: float, lam: float, first_task: bool) -> float:
    """Contrastive variant of the combined loss, same gating rule."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    return float(ssl) if first_task else float(ssl) + lam * float(pd)


def bits_per_index(K: int) -> int:
    if K < 2:
        raise ConfigError(f"K must be >= 2, got {K}")
    return int(math.ceil(math.log2(K)))


def storage_bits(num_samples: int, K: int, packed: bool = True) -> int:
    """Bits needed to retain one index per sample.

    Packed counts ceil(log2 K) bits per sample; unpacked counts one whole
    machine integer (64 bits) per sample.
    """
    if num_samples < 0:
        raise ConfigError(f"num_samples must be >= 0, got {num_samples}")
    if num_samples == 0:
        return 0
    if K < 2:
        raise ConfigError(f"K must be >= 2, got {K}")
    per = bits_per_index(K) if packed else UNPACKED_INDEX_BITS
    return num_samples * per


def serialize_state(state: DecorState) -> bytes:
    """Pack an active state into the binary record documented above."""
    if not state.active:
        raise StateError("cannot serialize an inactive state")
    n = len(state)
    b = bits_per_index(state.K)
    order = np.argsort(state.sample_ids, kind="stable")
    idx = state.indices.indices[order].astype(np.uint64)
    bit_cols = (idx[:, None] >> np.arange(b, dtype=np.uint64)[None, :]) & 1
    payload = np.packbits(bit_cols.astype(np.uint8).reshape(-1), bitorder="little")
    header = struct.pack("<4sBII", STATE_MAGIC, STATE_VERSION, state.K, n)
    return header + payload.tobytes()


def deserialize_state(data: bytes, sample_ids=None) -> DecorState:
    """Inverse of `serialize_state`.

    Indices come back in ascending sample-id order; callers that used
    non-contiguous ids must pass the same ids again (sorted ascending
    internally) to rebind them.
    """
    if len(data) < HEADER_BYTES:
        raise ConfigError(f"record too short for header: {len(data)} bytes")
    magic, version, K, n = struct.unpack("<4sBII", data[:HEADER_BYTES])
    if magic != STATE_MAGIC:
        raise ConfigError(f"bad magic {magic!r}")
    if version != STATE_VERSION:
        raise ConfigError(f"unsupported version {version}")
    b = bits_per_index(K)
    expected = HEADER_BYTES + (n * b + 7) // 8
    if len(data) != expected:
        raise ConfigError(f"record length {len(data)} != expected {expected}")
    raw = np.frombuffer(data[HEADER_BYTES:], dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")[: n * b].reshape(n, b)
    indices = (bits.astype(np.int64) << np.arange(b, dtype=np.int64)[None, :]).sum(axis=1)
    if sample_ids is None:
        sample_ids = np.arange(n, dtype=np.int64)
    else:
        sample_ids = np.sort(np.asarray(sample_ids, dtype=np.int64))
        if sample_ids.size != n:
            raise ConfigError(f"got {sample_ids.size} sample ids for N={n}")
    return DecorState(
        indices=IndexAssignment(indices, K), sample_ids=sample_ids, K=K, active=True
    )
