"""File formats: CMX1 complex matrices, complex CSV, phase CSV, 16-bit PGM."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .linops import as_complex_matrix

CMX_MAGIC = b"CMX1"
_HEADER = struct.Struct("<4sQQ")


class FormatError(ValueError):
    pass


def write_cmx(path, M) -> None:
    M = as_complex_matrix(M)
    rows, cols = M.shape
    body = np.empty((rows, cols, 2), dtype="<f8")
    body[..., 0] = M.real
    body[..., 1] = M.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CMX_MAGIC, rows, cols))
        fh.write(body.tobytes(order="C"))


def read_cmx(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != CMX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: empty matrix {rows}x{cols}")
    expected = _HEADER.size + rows * cols * 16
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols, 2)
    if not np.all(np.isfinite(body)):
        raise FormatError(f"{path}: non-finite entries")
    return body[..., 0] + 1j * body[..., 1]


def _fmt_complex(z) -> str:
    re, im = float(z.real), float(z.imag)
    sign = "-" if np.signbit(im) else "+"
    return f"{re!r}{sign}{abs(im)!r}j"


def write_complex_csv(path, M) -> None:
    """CSV with one ``re+imj`` cell per entry (round-trips float64 exactly)."""
    M = as_complex_matrix(M)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([_fmt_complex(z) for z in row])


def read_complex_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        M = np.array([[complex(c.strip().replace(" ", "")) for c in r] for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if M.ndim != 2 or M.size == 0:
        raise FormatError(f"{path}: ragged or empty rows")
    if not np.all(np.isfinite(M)):
        raise FormatError(f"{path}: non-finite entries")
    return as_complex_matrix(M)


def write_phases_csv(path, phases) -> None:
    phases = np.asarray(phases, dtype=float).ravel()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "radians"])
        for i, p in enumerate(phases):
            w.writerow([i, repr(float(p))])


def read_phases_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["index", "radians"]:
        raise FormatError(f"{path}: missing 'index,radians' header")
    out = np.empty(len(rows) - 1)
    for n, row in enumerate(rows[1:]):
        try:
            idx, val = int(row[0]), float(row[1])
        except (ValueError, IndexError):
            raise FormatError(f"{path}: malformed row {n + 2}: {row!r}") from None
        if idx != n or len(row) != 2:
            raise FormatError(f"{path}: row {n + 2} must be '{n},<radians>'")
        if not np.isfinite(val):
            raise FormatError(f"{path}: non-finite phase at row {n + 2}")
        out[n] = val
    return out


def write_pgm16(path, image) -> None:
    """Binary 16-bit PGM of ``|image|``, linearly scaled so the max maps to 65535."""
    mag = np.abs(np.asarray(image))
    if mag.ndim != 2:
        raise FormatError("PGM needs a 2-D image")
    peak = mag.max()
    scaled = mag / peak if peak > 0 else mag
    pix = np.round(scaled * 65535).astype(">u2")
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(pix.tobytes())


def read_pgm16(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(v) for v in parts[1].split())
    if int(parts[2]) != 65535:
        raise FormatError(f"{path}: expected maxval 65535")
    return np.frombuffer(parts[3], dtype=">u2").reshape(h, w).astype(np.uint16)
