"""Readers and writers for images, point tables, seeds and reports."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .cluster import SeedPoint


class InputError(ValueError):
    """Malformed or unreadable user input."""


# ---------------------------------------------------------------------------
# Images
# ---------------------------------------------------------------------------

def _pgm_tokens(data: bytes):
    # header tokens with '#' comments stripped; yields (token, end offset)
    i, n = 0, len(data)
    while i < n:
        c = data[i:i + 1]
        if c == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < n and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or binary (P5) greyscale PGM as a float array."""
    data = Path(path).read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, end = next(tokens)
        w, h, maxv = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise InputError(f"{path}: truncated or malformed PGM header") from exc
    if magic not in (b"P2", b"P5"):
        raise InputError(f"{path}: not a greyscale PGM (magic {magic!r})")
    if w < 1 or h < 1 or not 0 < maxv < 65536:
        raise InputError(f"{path}: bad PGM dimensions or maxval")
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxv > 255 else np.dtype("u1")
        raw = data[end + 1:end + 1 + w * h * dtype.itemsize]
        if len(raw) < w * h * dtype.itemsize:
            raise InputError(f"{path}: PGM pixel data truncated")
        pixels = np.frombuffer(raw, dtype=dtype)
    else:
        try:
            pixels = np.array([int(t) for t, _ in tokens][: w * h])
        except ValueError as exc:
            raise InputError(f"{path}: non-integer PGM sample") from exc
        if pixels.size < w * h:
            raise InputError(f"{path}: PGM pixel data truncated")
    return pixels.reshape(h, w).astype(float)


def write_pgm(path, image, binary: bool = True) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    img = np.clip(np.rint(img), 0, 65535).astype(int)
    maxv = max(int(img.max()), 1)
    h, w = img.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n{maxv}\n".encode())
            fh.write(img.astype(">u2" if maxv > 255 else "u1").tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n{maxv}\n".encode())
            for row in img:
                fh.write((" ".join(map(str, row)) + "\n").encode())


def read_image(path) -> np.ndarray:
    """Greyscale image from PGM, or PNG and other formats Pillow reads."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    if path.suffix.lower() in (".pgm", ".pnm"):
        return read_pgm(path)
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("F"), dtype=float)
    except OSError as exc:
        raise InputError(f"{path}: unreadable image ({exc})") from exc


# ---------------------------------------------------------------------------
# Tables
# ---------------------------------------------------------------------------

def read_points(path) -> tuple[np.ndarray, list[str]]:
    """Headered CSV of points, one column per dimension."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise InputError(f"{path}: needs a header row and at least one point")
    header = [h.strip() for h in rows[0]]
    try:
        pts = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric value ({exc})") from exc
    if pts.ndim != 2 or pts.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    return pts, header


def write_points(path, points, header=None) -> None:
    pts = np.asarray(points, dtype=float)
    header = header or [f"x{i + 1}" for i in range(pts.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows([[repr(float(v)) for v in row] for row in pts])


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_seeds(path, seeds: list[SeedPoint]) -> None:
    """Seed table ``object_id, x1..xn, support``; fixed precision for byte stability."""
    n = len(seeds[0].position) if seeds else 2
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["object_id"] + [f"x{i + 1}" for i in range(n)] + ["support"])
        for s in seeds:
            w.writerow([s.object_id] + [_fmt(v) for v in s.position] + [s.support])


def _read_table(path, with_support: bool):
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "object_id":
        raise InputError(f"{path}: first column must be object_id")
    out: dict[int, list] = {}
    try:
        for r in rows[1:]:
            oid = int(r[0])
            coords = r[1:-1] if with_support and header[-1] == "support" else r[1:]
            out.setdefault(oid, []).append([float(v) for v in coords])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed row ({exc})") from exc
    return {k: np.array(v, dtype=float) for k, v in out.items()}


def read_seeds(path) -> dict[int, np.ndarray]:
    return _read_table(path, with_support=True)


def read_truth(path) -> dict[int, np.ndarray]:
    """Truth table ``object_id, x1..xn`` grouped by object."""
    return _read_table(path, with_support=False)


def write_contour(path, contour, candidates=None) -> None:
    """Contour vertices with curvature, then optional candidate points (kappa blank)."""
    kappa = contour.curvature if contour.curvature is not None else np.zeros(len(contour))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "x", "y", "kappa"])
        for (x, y), k in zip(contour.vertices, kappa):
            w.writerow(["vertex", _fmt(x), _fmt(y), _fmt(k)])
        for x, y in ([] if candidates is None else candidates):
            w.writerow(["candidate", _fmt(x), _fmt(y), ""])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
