"""
Local storage helpers: parameter containers, portable graymaps, YAML, checksums.

Parameter container layout (all integers little-endian):

    magic   8 bytes   b"CASOPRM\\x00"
    version uint32
    count   uint32
    count x record:
        name_len uint32, name utf-8 bytes,
        rank uint32, rank x uint64 dims,
        prod(dims) x float64 payload
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np
import yaml

from src.errors import ContainerFormatError

logger = logging.getLogger(__name__)

MAGIC = b"CASOPRM\x00"
VERSION = 1


# ============================================================================
# Parameter container
# ============================================================================

def save_params(path: Path, params: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, array in params.items():
        array = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes())
    atomic_write_bytes(path, b"".join(chunks))
    return path


def load_params(path: Path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise ContainerFormatError(f"{path}: not a parameter container (bad magic {blob[:8]!r})")
    try:
        version, count = struct.unpack_from("<II", blob, 8)
        if version != VERSION:
            raise ContainerFormatError(f"{path}: unsupported container version {version}")
        offset = 16
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, offset)
            offset += 8 * rank
            n = int(np.prod(dims)) if rank else 1
            if offset + 8 * n > len(blob):
                raise ContainerFormatError(f"{path}: payload of {name!r} truncated")
            params[name] = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(dims).copy()
            offset += 8 * n
    except struct.error as exc:
        raise ContainerFormatError(f"{path}: truncated header ({exc})") from exc
    if offset != len(blob):
        raise ContainerFormatError(f"{path}: {len(blob) - offset} trailing bytes")
    return params


def save_network(stem: Path, state: Mapping[str, np.ndarray], manifest: dict) -> tuple[Path, Path]:
    """Write `<stem>.bin` (parameters) and `<stem>.yaml` (sidecar manifest)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    bin_path = save_params(stem.with_suffix(".bin"), state)
    yaml_path = write_yaml(stem.with_suffix(".yaml"), manifest)
    return bin_path, yaml_path


def load_network(stem: Path) -> tuple[dict[str, np.ndarray], dict]:
    stem = Path(stem)
    return load_params(stem.with_suffix(".bin")), read_yaml(stem.with_suffix(".yaml"))


# ============================================================================
# Portable graymaps / pixmaps
# ============================================================================

def write_pgm(path: Path, image: np.ndarray, maxval: int = 255) -> Path:
    """Binary PGM (P5) from values in [0, 1]; out-of-range values are clipped."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"write_pgm needs a 2-D image, got shape {image.shape}")
    levels = np.round(np.clip(image, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(Path(path), header + levels.astype(dtype).tobytes())
    return Path(path)


def write_ppm(path: Path, image: np.ndarray, maxval: int = 255) -> Path:
    """Binary PPM (P6) from an (h, w, 3) array in [0, 1]."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"write_ppm needs an (h, w, 3) image, got shape {image.shape}")
    levels = np.round(np.clip(image, 0.0, 1.0) * maxval).astype("u1")
    header = f"P6\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    atomic_write_bytes(Path(path), header + levels.tobytes())
    return Path(path)


def read_pgm(path: Path) -> np.ndarray:
    """Binary PGM (P5) as floats in [0, 1]; header comments (`#` to end of line) are skipped."""
    blob = Path(path).read_bytes()
    fields = []
    offset = 0
    while len(fields) < 4:
        while offset < len(blob) and blob[offset:offset + 1].isspace():
            offset += 1
        if offset < len(blob) and blob[offset:offset + 1] == b"#":
            newline = blob.find(b"\n", offset)
            offset = len(blob) if newline < 0 else newline + 1
            continue
        if offset >= len(blob):
            raise ValueError(f"{path}: truncated PGM header ({len(fields)} of 4 fields)")
        end = offset
        while end < len(blob) and not blob[end:end + 1].isspace():
            end += 1
        fields.append(blob[offset:end].decode("ascii"))
        offset = end
    if fields[0] != "P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    dtype = np.dtype(">u2" if maxval > 255 else "u1")
    needed = width * height * dtype.itemsize
    if len(blob) - offset - 1 < needed:
        raise ValueError(f"{path}: PGM payload has {max(len(blob) - offset - 1, 0)} bytes, {needed} needed")
    data = np.frombuffer(blob, dtype=dtype, count=width * height, offset=offset + 1)
    return data.reshape(height, width).astype(np.float64) / maxval


# ============================================================================
# Masks
# ============================================================================

def rle_encode(mask: np.ndarray) -> str:
    """Run lengths of a flattened boolean mask, starting with a False run."""
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    runs = []
    current, length = False, 0
    for value in flat:
        if value == current:
            length += 1
        else:
            runs.append(length)
            current, length = value, 1
    runs.append(length)
    return " ".join(str(r) for r in runs)


def rle_decode(text: str, shape: tuple[int, ...]) -> np.ndarray:
    runs = [int(r) for r in text.split()]
    values = np.concatenate([np.full(r, i % 2 == 1) for i, r in enumerate(runs)]) if runs else np.array([], bool)
    if values.size != int(np.prod(shape)):
        raise ValueError(f"run lengths cover {values.size} pixels, shape {shape} needs {int(np.prod(shape))}")
    return values.reshape(shape)


# ============================================================================
# Text files and checksums
# ============================================================================

def atomic_write_bytes(path: Path, payload: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def to_plain(value):
    """Recursively convert tuples, paths and numpy scalars/arrays to YAML-safe types."""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


def write_yaml(path: Path, data: dict) -> Path:
    text = yaml.safe_dump(to_plain(data), sort_keys=False, default_flow_style=False)
    atomic_write_bytes(Path(path), text.encode("utf-8"))
    return Path(path)


def read_yaml(path: Path) -> dict:
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}


def sha256sum(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        for chunk in iter(lambda: f.read(8192), b""):
            h.update(chunk)
    return h.hexdigest()


def array_fingerprint(array: np.ndarray) -> str:
    """sha256 of the little-endian float64 bytes of `array`."""
    return hashlib.sha256(np.ascontiguousarray(array, dtype="<f8").tobytes()).hexdigest()
