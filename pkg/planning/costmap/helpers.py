"""
Text map files.

    costmap v1 <l> <resolution_m> <origin_x> <origin_y>
    <l rows of l characters, first row = highest y>

'.' = 0, '#' = 255, digits 1-9 = 25 * digit.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from kinoplan.errors import MapFormatError
from planning.costmap.core import LETHAL, Costmap
from planning.geometry.core import Pose2D

_HEADER = "costmap"
_VERSION = "v1"


def _char_cost(ch: str, row: int, col: int) -> int:
    if ch == ".":
        return 0
    if ch == "#":
        return LETHAL
    if ch in "123456789":
        return 25 * int(ch)
    raise MapFormatError(f"unknown cell character {ch!r} at row {row}, column {col}")


def _cost_char(v: int) -> str:
    if v <= 0:
        return "."
    if v >= LETHAL:
        return "#"
    return str(min(9, max(1, int(round(v / 25.0)))))


def parse_costmap_text(text: str, map_id: str = "") -> Costmap:
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapFormatError("empty map file")
    head = lines[0].split()
    if len(head) != 6 or head[0] != _HEADER:
        raise MapFormatError(f"bad header line: {lines[0]!r}")
    if head[1] != _VERSION:
        raise MapFormatError(f"unsupported map version {head[1]!r}")
    try:
        l = int(head[2])
        res, ox, oy = float(head[3]), float(head[4]), float(head[5])
    except ValueError as e:
        raise MapFormatError(f"bad header values: {lines[0]!r}") from e
    rows = lines[1:]
    if l < 1 or len(rows) != l:
        raise MapFormatError(f"expected {l} rows, found {len(rows)}")
    cells = np.empty((l, l), dtype=np.uint8)
    for r, row in enumerate(rows):
        if len(row) != l:
            raise MapFormatError(f"row {r} has {len(row)} characters, expected {l}")
        cells[l - 1 - r] = [_char_cost(ch, r, c) for c, ch in enumerate(row)]
    try:
        return Costmap(cells=cells, resolution=res, origin=Pose2D.of(ox, oy, 0.0), map_id=map_id)
    except ValueError as e:
        raise MapFormatError(str(e)) from e


def dump_costmap_text(costmap: Costmap) -> str:
    l = costmap.size_l
    head = f"{_HEADER} {_VERSION} {l} {costmap.resolution!r} {costmap.origin.x!r} {costmap.origin.y!r}"
    rows = ["".join(_cost_char(int(v)) for v in costmap.cells[iy]) for iy in range(l - 1, -1, -1)]
    return "\n".join([head] + rows) + "\n"


def load_costmap(path: str | Path, map_id: Optional[str] = None) -> Costmap:
    p = Path(path)
    return parse_costmap_text(p.read_text(encoding="utf-8"), map_id=map_id or p.stem)


def save_costmap(costmap: Costmap, path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(dump_costmap_text(costmap), encoding="utf-8")
