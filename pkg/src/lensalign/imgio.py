"""File codecs: binary PGM (8-bit for patterns, 16-bit for sensor images)
and the lossless float32 sidecar used for reward computation.

16-bit PGM carries a `# max_value <float>` header comment; stored integers
map linearly from [0, max_value]. The sidecar is a 16-byte header (magic
"RLGNF32\\0", uint32 LE width, uint32 LE height) followed by row-major
little-endian float32 values.
"""

from __future__ import annotations

import numpy as np

SIDECAR_MAGIC = b"RLGNF32\x00"


def write_pgm16(path, data: np.ndarray, max_value: float | None = None) -> None:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-D array")
    if max_value is None:
        max_value = float(data.max()) if data.size and data.max() > 0 else 1.0
    h, w = data.shape
    scaled = np.clip(np.rint(data / max_value * 65535.0), 0, 65535).astype(">u2")
    with open(path, "wb") as f:
        f.write(f"P5\n# max_value {max_value!r}\n{w} {h}\n65535\n".encode("ascii"))
        f.write(scaled.tobytes())


def read_pgm16(path) -> tuple[np.ndarray, float]:
    raw, fields, comments = _read_pgm_header(path)
    w, h, maxval = fields
    if maxval != 65535:
        raise ValueError(f"expected 16-bit PGM, got maxval {maxval}")
    max_value = 1.0
    for c in comments:
        parts = c.split()
        if len(parts) == 2 and parts[0] == "max_value":
            max_value = float(parts[1])
    data = np.frombuffer(raw, dtype=">u2", count=w * h).reshape(h, w)
    return data.astype(np.float64) / 65535.0 * max_value, max_value


def write_pgm8(path, data: np.ndarray) -> None:
    """8-bit PGM from values in [0, 1]."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-D array")
    if data.size and (data.min() < 0 or data.max() > 1):
        raise ValueError("8-bit PGM expects values in [0, 1]")
    h, w = data.shape
    scaled = np.clip(np.rint(data * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(scaled.tobytes())


def read_pgm8(path) -> np.ndarray:
    raw, fields, _ = _read_pgm_header(path)
    w, h, maxval = fields
    if maxval != 255:
        raise ValueError(f"expected 8-bit PGM, got maxval {maxval}")
    data = np.frombuffer(raw, dtype=np.uint8, count=w * h).reshape(h, w)
    return data.astype(np.float64) / 255.0


def _read_pgm_header(path):
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    comments: list[str] = []
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(blob):
            raise ValueError(f"{path}: truncated PGM header")
        if blob[pos : pos + 1] == b"#":
            end = blob.index(b"\n", pos)
            comments.append(blob[pos + 1 : end].decode("ascii").strip())
            pos = end + 1
            continue
        end = pos
        while end < len(blob) and not blob[end : end + 1].isspace():
            end += 1
        fields.append(int(blob[pos:end]))
        pos = end
    pos += 1  # single whitespace byte after maxval
    return blob[pos:], tuple(fields), comments


def write_floats(path, data: np.ndarray) -> None:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("expected a 2-D array")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(SIDECAR_MAGIC)
        f.write(np.array([w, h], dtype="<u4").tobytes())
        f.write(data.astype("<f4").tobytes())


def read_floats(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != SIDECAR_MAGIC:
        raise ValueError(f"{path}: bad sidecar magic")
    w, h = np.frombuffer(blob, dtype="<u4", count=2, offset=8)
    data = np.frombuffer(blob, dtype="<f4", count=int(w) * int(h), offset=16)
    return data.reshape(int(h), int(w)).astype(np.float64)
