"""Versioned binary model files.

Layout: 8-byte magic, little-endian uint32 version, uint64 payload length,
32-byte SHA-256 of the payload, then the payload (an ``.npz`` archive with a
JSON metadata entry). Arrays are stored exactly, so a loaded model predicts
bit-identically to the one that was saved.
"""

import hashlib
import io
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import crc
from .ensemble import Channel, EnsembleConfig, EnsembleModel
from .errors import (BadMagicError, ChecksumError, DataError, TruncatedModelError,
                     VersionMismatchError)
from .features import FilterBank, LcnSpec, PoolingSpec
from .reduction import PcaModel

MAGIC = b"ECRCMODL"
VERSION = 1
_HEADER = struct.Struct("<8sIQ32s")


def _frozen(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


def dumps(model):
    config = asdict(model.config)
    meta = {
        "config": config,
        "bank": {"gain": model.bank.gain, "inner_scale": model.bank.inner_scale,
                 "seed": model.bank.seed, "amplitude": model.bank.amplitude},
        "image_shape": list(model.image_shape),
        "class_names": list(model.class_names),
        "channels": [ch.index for ch in model.channels],
        "lams": [ch.operator.lam for ch in model.channels],
        "normalized": [ch.dictionary.normalized for ch in model.channels],
        "metadata": model.metadata,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
              "filters": model.bank.filters}
    for i, ch in enumerate(model.channels):
        arrays[f"pca_mean_{i}"] = ch.pca.mean
        arrays[f"pca_basis_{i}"] = ch.pca.basis
        arrays[f"a_{i}"] = ch.dictionary.matrix_a
        arrays[f"labels_{i}"] = ch.dictionary.labels
        arrays[f"p_{i}"] = ch.operator.matrix_p
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    payload = buf.getvalue()
    return _HEADER.pack(MAGIC, VERSION, len(payload), hashlib.sha256(payload).digest()) + payload


def loads(blob):
    if len(blob) < _HEADER.size:
        raise TruncatedModelError(f"model file is {len(blob)} bytes, shorter than its header")
    magic, version, length, digest = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError("not an ecrc model file (bad magic bytes)")
    if version != VERSION:
        raise VersionMismatchError(f"model format version {version}, this build reads {VERSION}")
    payload = blob[_HEADER.size:]
    if len(payload) < length:
        raise TruncatedModelError(f"model payload truncated: {len(payload)} of {length} bytes")
    if len(payload) > length:
        raise ChecksumError("trailing bytes after model payload")
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumError("model payload checksum mismatch")
    try:
        with np.load(io.BytesIO(payload), allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
        meta = json.loads(arrays["meta"].tobytes().decode())
    except (ValueError, KeyError, OSError) as exc:
        raise DataError(f"model payload is malformed: {exc}") from exc

    cfg = dict(meta["config"])
    cfg["lcn"] = LcnSpec(**cfg["lcn"])
    cfg["pooling"] = PoolingSpec(**cfg["pooling"])
    config = EnsembleConfig(**cfg)
    bank = FilterBank(arrays["filters"], **meta["bank"])
    channels = []
    for i, index in enumerate(meta["channels"]):
        labels = _frozen(arrays[f"labels_{i}"])
        dictionary = crc.Dictionary(matrix_a=_frozen(arrays[f"a_{i}"]), labels=labels,
                                    class_count=int(labels.max()), normalized=meta["normalized"][i])
        channels.append(Channel(
            index=index,
            pca=PcaModel(mean=_frozen(arrays[f"pca_mean_{i}"]), basis=_frozen(arrays[f"pca_basis_{i}"])),
            dictionary=dictionary,
            operator=crc.ProjectionOperator(matrix_p=_frozen(arrays[f"p_{i}"]), lam=meta["lams"][i])))
    return EnsembleModel(config=config, bank=bank, channels=tuple(channels),
                         image_shape=tuple(meta["image_shape"]), class_names=tuple(meta["class_names"]),
                         metadata=meta["metadata"])


def persist_model(model, path):
    Path(path).write_bytes(dumps(model))


def load_model(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    return loads(blob)
