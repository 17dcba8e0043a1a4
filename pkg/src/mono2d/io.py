"""File formats: binary PGM images, raw planar feature files, text checkpoints."""
from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointError, InvalidInputError, UnreadableFileError, UnsupportedFormatError
from .params import FilterBank, bank_from_mapping, bank_to_lines, read_key_values

RAW_MAGIC = "MONO2D"
RAW_VERSION = 1


def atomic_write_bytes(path, data: bytes) -> None:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


# -- PGM -------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary (P5) PGM; returns ``(image scaled to [0, 1], maxval)``.

    Supports 8-bit and 16-bit (big-endian) samples.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read {path}: {exc}") from exc
    if data[:2] != b"P5":
        raise UnsupportedFormatError(f"{path}: unsupported format {data[:8]!r}, expected binary PGM (P5)")
    pos = 0
    tokens = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise InvalidInputError(f"{path}: truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise InvalidInputError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise InvalidInputError(f"{path}: invalid PGM dimensions or maxval")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height
    body = data[pos:pos + n * dtype.itemsize]
    if len(body) != n * dtype.itemsize:
        raise InvalidInputError(f"{path}: truncated PGM data")
    pixels = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return pixels.astype(np.float64) / maxval, maxval


def write_pgm(path, image, maxval: int = 255) -> None:
    """Quantize an image in ``[0, 1]`` and write it as binary PGM."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    q = np.rint(img * maxval).astype(dtype)
    h, w = img.shape
    atomic_write_bytes(path, f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + q.tobytes())


# -- raw feature files -------------------------------------------------------------

def encode_features(channels, names, n_scales: int, flags: dict) -> bytes:
    """Eight ASCII header lines followed by float64 little-endian planar data."""
    arr = np.asarray(channels, dtype=np.float64)
    c, h, w = arr.shape
    flag_text = " ".join(f"{k}={v}" for k, v in flags.items())
    header = [
        RAW_MAGIC,
        f"version {RAW_VERSION}",
        f"height {h}",
        f"width {w}",
        f"channels {c}",
        "names " + ",".join(names),
        f"scales {n_scales}",
        f"flags {flag_text}",
    ]
    return ("\n".join(header) + "\n").encode("ascii") + arr.astype("<f8").tobytes()


def decode_features(data: bytes):
    """Inverse of :func:`encode_features`; returns ``(channels, header dict)``."""
    lines = data.split(b"\n", 8)
    if len(lines) < 9 or lines[0] != RAW_MAGIC.encode():
        raise InvalidInputError("not a MONO2D raw feature file")
    header = {}
    for line in lines[1:8]:
        key, _, value = line.decode("ascii").partition(" ")
        header[key] = value
    h, w, c = int(header["height"]), int(header["width"]), int(header["channels"])
    body = lines[8]
    if len(body) != 8 * c * h * w:
        raise InvalidInputError("raw feature payload has the wrong size")
    header["names"] = header["names"].split(",") if header["names"] else []
    header["flags"] = dict(kv.split("=", 1) for kv in header["flags"].split()) if header.get("flags") else {}
    return np.frombuffer(body, dtype="<f8").reshape(c, h, w).copy(), header


def write_features(path, channels, names, n_scales: int, flags: dict) -> None:
    atomic_write_bytes(path, encode_features(channels, names, n_scales, flags))


def read_features(path):
    return decode_features(Path(path).read_bytes())


# -- checkpoints -------------------------------------------------------------------

def save_checkpoint(path, bank: FilterBank | None = None, head=None, extra: dict | None = None) -> None:
    """Write a bank and/or head as ``key = value`` lines with hex floats."""
    lines = ["# mono2d checkpoint"]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    if bank is not None:
        lines += bank_to_lines(bank, prefix="bank.")
    if head is not None:
        vec = head.vector
        lines.append(f"head.channels = {head.weights.size}")
        lines += [f"head.{i} = {float(v).hex()}" for i, v in enumerate(vec)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_checkpoint(path):
    """Return ``(bank or None, head or None, mapping)``."""
    from .trainer import HeadModel

    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    kv = read_key_values(text)
    # plain bank files written by params.dumps_bank carry no prefix
    if "n_scales" in kv and "bank.n_scales" not in kv:
        kv = {f"bank.{k}": v for k, v in kv.items()}
    bank = bank_from_mapping(kv, prefix="bank.") if "bank.n_scales" in kv else None
    head = None
    if "head.channels" in kv:
        try:
            c = int(kv["head.channels"])
            vec = np.array([float.fromhex(kv[f"head.{i}"]) for i in range(c + 10)])
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"incomplete head in checkpoint: {exc}") from exc
        head = HeadModel(np.zeros(c), 0.0, np.zeros((3, 3))).with_vector(vec)
    if bank is None and head is None:
        raise CheckpointError(f"{path}: no bank or head found")
    return bank, head, kv
