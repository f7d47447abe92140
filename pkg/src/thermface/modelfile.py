"""
Versioned binary model file.

Layout: the 4-byte magic ``THFM``, a version byte, then tagged blocks, each
``tag (4 ASCII bytes) | payload length (uint64) | payload``. Integers and
floats are little-endian; floats are 64-bit.

  CONF  pipeline config as ``key = value`` UTF-8 text
  BANK  12 x 3 x 3 mask coefficients
  EIGS  d, k (uint32); mean[d]; eigenvalues[k]; basis[d x k] row-major;
        projection scale
  MLPW  layer count and sizes (uint32); learning rate, momentum, target
        loss, init scale; max epochs, epochs trained (uint32); seed (int64);
        then per layer the weight matrix (row-major) and the bias vector
  LABL  class display names, UTF-8, newline separated
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import classifier
from .config import PipelineConfig, format_config, parse_config
from .eigenspace import Eigenspace
from .errors import ParseError, UnreadableFile, VersionMismatch
from .evaluation import TrainedModel
from .imaging import atomic_write_bytes
from .linefeat import DEFAULT_LABELS, Mask3, MaskBank

MAGIC = b"THFM"
VERSION = 1
BLOCK_ORDER = (b"CONF", b"BANK", b"EIGS", b"MLPW", b"LABL")
_F8 = np.dtype("<f8")


@dataclass
class ModelFile:
    config: PipelineConfig
    bank: MaskBank
    model: TrainedModel


def _floats(values) -> bytes:
    return np.ascontiguousarray(values, dtype=_F8).tobytes()


class _Reader:
    def __init__(self, payload: bytes, tag: bytes):
        self.payload = payload
        self.pos = 0
        self.tag = tag.decode()

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.payload):
            raise VersionMismatch(f"block {self.tag} is shorter than its contents require")
        chunk = self.payload[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int, shape=None) -> np.ndarray:
        arr = np.frombuffer(self.take(8 * count), dtype=_F8).astype(np.float64)
        return arr.reshape(shape) if shape is not None else arr

    def done(self):
        if self.pos != len(self.payload):
            raise VersionMismatch(f"block {self.tag} has {len(self.payload) - self.pos} trailing bytes")


def _encode_eigs(model: TrainedModel) -> bytes:
    es = model.eigenspace
    return (
        struct.pack("<II", es.d, es.k)
        + _floats(es.mean)
        + _floats(es.eigenvalues)
        + _floats(es.basis)
        + _floats([model.feature_scale])
    )


def _encode_mlp(mlp: classifier.MlpModel) -> bytes:
    cfg = mlp.config
    sizes = cfg.layer_sizes
    out = [struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)]
    out.append(struct.pack("<4d", cfg.learning_rate, cfg.momentum, cfg.target_loss, cfg.init_scale))
    out.append(struct.pack("<IIq", cfg.max_epochs, mlp.epochs_trained, cfg.seed))
    for w, b in zip(mlp.weights, mlp.biases):
        out.append(_floats(w))
        out.append(_floats(b))
    return b"".join(out)


def encode_model(mf: ModelFile) -> bytes:
    blocks = {
        b"CONF": format_config(mf.config).encode("utf-8"),
        b"BANK": _floats(mf.bank.as_array()),
        b"EIGS": _encode_eigs(mf.model),
        b"MLPW": _encode_mlp(mf.model.mlp),
        b"LABL": "\n".join(mf.model.labels).encode("utf-8"),
    }
    out = [MAGIC, struct.pack("<B", VERSION)]
    for tag in BLOCK_ORDER:
        out.append(tag + struct.pack("<Q", len(blocks[tag])) + blocks[tag])
    return b"".join(out)


def _split_blocks(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise VersionMismatch("not a model file (bad magic)")
    if len(data) < 5 or data[4] != VERSION:
        found = data[4] if len(data) > 4 else None
        raise VersionMismatch(f"model file version {found}, this build reads version {VERSION}")
    pos, blocks = 5, {}
    while pos < len(data):
        if pos + 12 > len(data):
            raise VersionMismatch("truncated block header")
        tag = data[pos : pos + 4]
        (length,) = struct.unpack("<Q", data[pos + 4 : pos + 12])
        pos += 12
        if pos + length > len(data):
            raise VersionMismatch(f"block {tag!r} runs past end of file")
        blocks[tag] = data[pos : pos + length]
        pos += length
    if tuple(blocks) != BLOCK_ORDER:
        raise VersionMismatch(f"unexpected block layout {[t.decode(errors='replace') for t in blocks]}")
    return blocks


def decode_model(data: bytes) -> ModelFile:
    blocks = _split_blocks(data)
    try:
        config = parse_config(blocks[b"CONF"].decode("utf-8"))
    except (UnicodeDecodeError, ParseError) as exc:
        raise VersionMismatch(f"config block unreadable: {exc}") from None

    r = _Reader(blocks[b"BANK"], b"BANK")
    coef = r.floats(12 * 9, (12, 3, 3))
    r.done()
    bank = MaskBank(tuple(Mask3(c, label) for c, label in zip(coef, DEFAULT_LABELS)))

    r = _Reader(blocks[b"EIGS"], b"EIGS")
    d, k = r.unpack("<II")
    mean = r.floats(d)
    eigenvalues = r.floats(k)
    basis = r.floats(d * k, (d, k))
    (scale,) = r.floats(1)
    r.done()
    es = Eigenspace(mean, basis, eigenvalues)

    r = _Reader(blocks[b"MLPW"], b"MLPW")
    (n_layers,) = r.unpack("<I")
    sizes = r.unpack(f"<{n_layers}I")
    lr, momentum, target_loss, init_scale = r.unpack("<4d")
    max_epochs, epochs_trained, seed = r.unpack("<IIq")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        weights.append(r.floats(fan_in * fan_out, (fan_out, fan_in)))
        biases.append(r.floats(fan_out))
    r.done()
    mlp_cfg = classifier.MlpConfig(sizes, lr, momentum, max_epochs, target_loss, seed, init_scale)
    mlp = classifier.MlpModel(
        weights,
        biases,
        mlp_cfg,
        [np.zeros_like(w) for w in weights],
        [np.zeros_like(b) for b in biases],
        epochs_trained,
    )
    if sizes[0] != k:
        raise VersionMismatch(f"network input size {sizes[0]} does not match eigenspace k={k}")

    labels = blocks[b"LABL"].decode("utf-8").split("\n") if blocks[b"LABL"] else []
    if len(labels) != sizes[-1]:
        raise VersionMismatch(f"{len(labels)} class names for {sizes[-1]} outputs")
    model = TrainedModel(config.eval.variant, es, float(scale), mlp, labels)
    return ModelFile(config, bank, model)


def save_model(mf: ModelFile, path) -> None:
    atomic_write_bytes(path, encode_model(mf))


def load_model(path) -> ModelFile:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise UnreadableFile(f"{path}: {exc.strerror or exc}") from None
    return decode_model(data)
