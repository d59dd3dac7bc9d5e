"""Versioned binary containers for checkpoints, DFMs and cached datasets.

All three formats share one layout:

=========  ===========================================================
bytes      content
=========  ===========================================================
8          magic (``DFMXCKPT``, ``DFMXDFM1`` or ``DFMXDATA``)
2          format version, uint16 little-endian
4          header length ``L``, uint32 little-endian
L          header: UTF-8 JSON, keys sorted, no whitespace
rest-32    payload (format specific, little-endian)
32         SHA-256 of header + payload
=========  ===========================================================

Checkpoint payload: every parameter tensor as float64, in layer order and
sorted key order within a layer (shapes are listed in the header).

DFM payload: fixed binary header ``<HHHddd`` (H, W, class_id, budget,
standard accuracy, retained accuracy) followed by ``ceil(H*W/8)`` bytes of the
row-major DC-centered mask packed MSB-first. The JSON header carries the
source model id.

Dataset payload: for train, val and test in turn, images as float64 then
labels as int64.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .datasets import DatasetBundle, LabeledSet
from .dfm import DominantFrequencyMap
from .model import ClassifierModel

CKPT_MAGIC = b"DFMXCKPT"
DFM_MAGIC = b"DFMXDFM1"
DATA_MAGIC = b"DFMXDATA"
VERSION = 1
_DFM_FIXED = struct.Struct("<HHHddd")


class StorageError(ValueError):
    pass


class VersionMismatchError(StorageError):
    pass


class DigestMismatchError(StorageError):
    pass


def _header_bytes(header: dict) -> bytes:
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def pack(magic: bytes, header: dict, payload: bytes) -> bytes:
    hb = _header_bytes(header)
    body = hb + payload
    return magic + struct.pack("<HI", VERSION, len(hb)) + body + hashlib.sha256(body).digest()


def unpack(magic: bytes, raw: bytes) -> tuple[dict, bytes]:
    if len(raw) < 14 + 32 or raw[:8] != magic:
        raise StorageError(f"not a {magic.decode()} file (bad magic or too short)")
    version, hlen = struct.unpack_from("<HI", raw, 8)
    if version != VERSION:
        raise VersionMismatchError(f"file version {version}, this library reads version {VERSION}")
    body, digest = raw[14:-32], raw[-32:]
    if hlen > len(body):
        raise StorageError("header length exceeds file size")
    if hashlib.sha256(body).digest() != digest:
        raise DigestMismatchError("SHA-256 digest mismatch: file is corrupt")
    try:
        header = json.loads(body[:hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StorageError(f"corrupt header: {exc}") from None
    return header, body[hlen:]


# --- checkpoints -------------------------------------------------------------------


def checkpoint_bytes(model: ClassifierModel) -> bytes:
    tensors, chunks = [], []
    for i, p in enumerate(model.params):
        for name in sorted(p):
            arr = np.ascontiguousarray(p[name], dtype="<f8")
            tensors.append({"layer": i, "name": name, "shape": list(arr.shape)})
            chunks.append(arr.tobytes())
    header = {
        "layers": model.layers,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "seed": model.seed,
        "model_id": model.model_id,
        "tensors": tensors,
    }
    return pack(CKPT_MAGIC, header, b"".join(chunks))


def checkpoint_from_bytes(raw: bytes) -> ClassifierModel:
    header, payload = unpack(CKPT_MAGIC, raw)
    params: list[dict[str, np.ndarray]] = [dict() for _ in header["layers"]]
    offset = 0
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        end = offset + 8 * count
        if end > len(payload):
            raise StorageError("payload shorter than the declared tensors")
        params[t["layer"]][t["name"]] = np.frombuffer(payload[offset:end], dtype="<f8").reshape(t["shape"]).astype(np.float64)
        offset = end
    if offset != len(payload):
        raise StorageError("trailing bytes after the declared tensors")
    return ClassifierModel(
        layers=header["layers"],
        params=params,
        input_shape=tuple(header["input_shape"]),
        num_classes=header["num_classes"],
        seed=header["seed"],
        model_id=header["model_id"],
    )


def save_checkpoint(model: ClassifierModel, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path: str | Path) -> ClassifierModel:
    return checkpoint_from_bytes(Path(path).read_bytes())


# --- DFMs --------------------------------------------------------------------------------


def dfm_bytes(dfm: DominantFrequencyMap) -> bytes:
    h, w = dfm.mask.shape
    fixed = _DFM_FIXED.pack(h, w, dfm.class_id, dfm.budget, dfm.standard_accuracy,
                            dfm.retained_accuracy)
    bits = np.packbits(dfm.mask.reshape(-1)).tobytes()
    return pack(DFM_MAGIC, {"source_model_id": dfm.source_model_id}, fixed + bits)


def dfm_from_bytes(raw: bytes) -> DominantFrequencyMap:
    header, payload = unpack(DFM_MAGIC, raw)
    if len(payload) < _DFM_FIXED.size:
        raise StorageError("DFM payload too short")
    h, w, class_id, budget, std_acc, ret_acc = _DFM_FIXED.unpack_from(payload)
    bits = payload[_DFM_FIXED.size:]
    if len(bits) != (h * w + 7) // 8:
        raise StorageError(f"expected {(h * w + 7) // 8} mask bytes, found {len(bits)}")
    mask = np.unpackbits(np.frombuffer(bits, dtype=np.uint8), count=h * w).reshape(h, w).astype(bool)
    return DominantFrequencyMap(class_id, mask, ret_acc, std_acc, budget,
                                header["source_model_id"])


def save_dfm(dfm: DominantFrequencyMap, path: str | Path) -> None:
    Path(path).write_bytes(dfm_bytes(dfm))


def load_dfm(path: str | Path) -> DominantFrequencyMap:
    return dfm_from_bytes(Path(path).read_bytes())


def dfm_to_json(dfm: DominantFrequencyMap) -> str:
    """Human-readable export; rows of the mask as ``0``/``1`` strings."""
    doc = {
        "class_id": dfm.class_id,
        "budget": dfm.budget,
        "standard_accuracy": dfm.standard_accuracy,
        "retained_accuracy": dfm.retained_accuracy,
        "frequency_count": dfm.frequency_count,
        "source_model_id": dfm.source_model_id,
        "height": dfm.mask.shape[0],
        "width": dfm.mask.shape[1],
        "mask": ["".join("1" if b else "0" for b in row) for row in dfm.mask],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def dfm_from_json(text: str) -> DominantFrequencyMap:
    doc = json.loads(text)
    mask = np.array([[c == "1" for c in row] for row in doc["mask"]], dtype=bool)
    return DominantFrequencyMap(doc["class_id"], mask, doc["retained_accuracy"],
                                doc["standard_accuracy"], doc["budget"], doc["source_model_id"])


def save_dfms(dfms, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for d in dfms:
        path = directory / f"class_{d.class_id:03d}.dfm"
        save_dfm(d, path)
        (directory / f"class_{d.class_id:03d}.json").write_text(dfm_to_json(d) + "\n")
        paths.append(path)
    return paths


def load_dfms(directory: str | Path) -> list[DominantFrequencyMap]:
    paths = sorted(Path(directory).glob("class_*.dfm"))
    if not paths:
        raise StorageError(f"no .dfm files in {directory}")
    return [load_dfm(p) for p in paths]


# --- dataset cache -----------------------------------------------------------------------

_SPLITS = ("train", "val", "test")


def dataset_bytes(bundle: DatasetBundle) -> bytes:
    header = {
        "num_classes": bundle.num_classes,
        "image_shape": list(bundle.train.image_shape),
        "sizes": [len(getattr(bundle, s)) for s in _SPLITS],
        "provenance": bundle.provenance,
    }
    chunks = []
    for s in _SPLITS:
        part = getattr(bundle, s)
        chunks.append(np.ascontiguousarray(part.images, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(part.labels, dtype="<i8").tobytes())
    return pack(DATA_MAGIC, header, b"".join(chunks))


def dataset_from_bytes(raw: bytes) -> DatasetBundle:
    header, payload = unpack(DATA_MAGIC, raw)
    shape = tuple(header["image_shape"])
    per_image = int(np.prod(shape))
    parts, offset = {}, 0
    for s, n in zip(_SPLITS, header["sizes"]):
        n_img = n * per_image * 8
        if offset + n_img + n * 8 > len(payload):
            raise StorageError("dataset payload truncated")
        images = np.frombuffer(payload[offset:offset + n_img], dtype="<f8").reshape((n,) + shape)
        offset += n_img
        labels = np.frombuffer(payload[offset:offset + n * 8], dtype="<i8")
        offset += n * 8
        parts[s] = LabeledSet(images.astype(np.float64), labels.astype(np.int64))
    return DatasetBundle(parts["train"], parts["val"], parts["test"], header["num_classes"],
                         header["provenance"])


def save_dataset(bundle: DatasetBundle, path: str | Path) -> None:
    Path(path).write_bytes(dataset_bytes(bundle))


def load_dataset(path: str | Path) -> DatasetBundle:
    return dataset_from_bytes(Path(path).read_bytes())
