"""Reading and writing BitmapSet files.

Row r of a file is the y index and column c the x index, so ``cells[x, y] = rows[y][x]``.
Text files hold n on the first line followed by n rows of 0/1; JSON files hold ``{"n", "rows"}``;
anything else goes through Pillow, where pixels darker than 50% gray are members.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from harmonic.errors import LabError
from harmonic.patterns import BitmapSet

TEXT_SUFFIXES = {".pbm", ".txt"}
GRAY_THRESHOLD = 128


class BitmapFormatError(ValueError):
    pass


def _from_rows(rows: list[list[int]], path: Path, declared: int | None = None) -> BitmapSet:
    n = len(rows) if declared is None else declared
    if len(rows) != n or any(len(row) != n for row in rows):
        raise BitmapFormatError(f"{path}: expected {n} rows of {n} cells")
    if any(value not in (0, 1) for row in rows for value in row):
        raise BitmapFormatError(f"{path}: cells must be 0 or 1")
    try:
        return BitmapSet(n, np.asarray(rows, dtype=bool).T)
    except LabError as exc:
        raise BitmapFormatError(f"{path}: {exc}") from exc


def _parse_row(line: str) -> list[int]:
    return [int(ch) for ch in line if ch in "01"]


def _read_text(path: Path) -> BitmapSet:
    lines = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if not lines:
        raise BitmapFormatError(f"{path}: empty bitmap file")
    try:
        n = int(lines[0])
    except ValueError as exc:
        raise BitmapFormatError(f"{path}: first line must be the grid size, got {lines[0]!r}") from exc
    return _from_rows([_parse_row(line) for line in lines[1:]], path, n)


def _read_json(path: Path) -> BitmapSet:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BitmapFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "rows" not in payload:
        raise BitmapFormatError(f"{path}: JSON bitmap needs a 'rows' field")
    rows = [_parse_row(row) if isinstance(row, str) else [int(v) for v in row] for row in payload["rows"]]
    return _from_rows(rows, path, payload.get("n"))


def _read_image(path: Path) -> BitmapSet:
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("L"))
    except (UnidentifiedImageError, OSError) as exc:
        raise BitmapFormatError(f"{path}: unreadable image: {exc}") from exc
    if pixels.shape[0] != pixels.shape[1]:
        raise BitmapFormatError(f"{path}: image must be square, got {pixels.shape[1]}x{pixels.shape[0]}")
    return _from_rows((pixels < GRAY_THRESHOLD).astype(int).tolist(), path)


def load_bitmap(path: Path) -> BitmapSet:
    if not path.exists():
        raise FileNotFoundError(f"Bitmap '{path}' not found")
    suffix = path.suffix.lower()
    if suffix in TEXT_SUFFIXES:
        return _read_text(path)
    if suffix == ".json":
        return _read_json(path)
    return _read_image(path)


def save_bitmap(e: BitmapSet, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = e.cells.T.astype(int)
    suffix = path.suffix.lower()
    if suffix in TEXT_SUFFIXES:
        lines = [str(e.n)] + ["".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    elif suffix == ".json":
        payload = {"n": e.n, "rows": ["".join(str(v) for v in row) for row in rows]}
        with path.open("w", encoding="utf-8") as f:
            json.dump(payload, f, ensure_ascii=False, indent=2)
    else:
        img = Image.fromarray(np.where(rows == 1, 0, 255).astype(np.uint8), mode="L")
        img.save(path, format="PNG")
    return path
