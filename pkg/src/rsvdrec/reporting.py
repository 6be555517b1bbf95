"""Delimited numeric tables with ``#`` provenance comments."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .errors import ParseError


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def write_table(path, header: Sequence[str], rows, comment: str | None = None) -> None:
    lines = [f"# {c}" for c in comment.splitlines()] if comment else []
    lines.append(",".join(header))
    lines += [",".join(_cell(x) for x in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _parse(cell: str):
    try:
        return float(cell)
    except ValueError:
        return cell


def read_table(path) -> tuple[list[str], list[list]]:
    """Read a table written by :func:`write_table`; numeric cells come back as floats."""
    header = None
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        if len(cells) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        rows.append([_parse(c) for c in cells])
    if header is None:
        raise ParseError(f"{path}: empty table")
    return header, rows


def read_comments(path) -> list[str]:
    return [line[2:] for line in Path(path).read_text().splitlines() if line.startswith("# ")]
