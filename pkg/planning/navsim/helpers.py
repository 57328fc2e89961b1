"""
Task suite files, one task per line:

    map_file start_x,start_y,start_deg goal_x,goal_y,goal_deg seed

Blank lines and lines starting with '#' are skipped. Map paths are resolved
relative to the suite file.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Sequence

from kinoplan.errors import MapFormatError
from planning.costmap.helpers import load_costmap
from planning.geometry.core import Pose2D
from planning.navsim.core import NavTask
from planning.navsim.gridworld import WorldMap


def _pose(field: str, lineno: int) -> Pose2D:
    parts = field.split(",")
    if len(parts) != 3:
        raise MapFormatError(f"line {lineno}: expected x,y,deg, got {field!r}")
    try:
        x, y, deg = (float(p) for p in parts)
    except ValueError as e:
        raise MapFormatError(f"line {lineno}: {e}") from e
    return Pose2D.of(x, y, math.radians(deg))


def _fmt_pose(p: Pose2D) -> str:
    return f"{p.x:.6g},{p.y:.6g},{math.degrees(p.theta):.6g}"


def parse_suite(text: str, base_dir: Path) -> List[NavTask]:
    tasks: List[NavTask] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 4:
            raise MapFormatError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        map_file, start, goal, seed = fields
        try:
            seed_v = int(seed)
        except ValueError as e:
            raise MapFormatError(f"line {lineno}: seed must be an integer") from e
        map_path = (base_dir / map_file).resolve()
        tasks.append(NavTask(
            task_id=len(tasks), map_id=map_path.stem, map_path=str(map_path),
            start=_pose(start, lineno), goal=_pose(goal, lineno), seed=seed_v,
        ))
    return tasks


def load_suite(path: str | Path) -> List[NavTask]:
    p = Path(path)
    return parse_suite(p.read_text(encoding="utf-8"), p.parent)


def save_suite(tasks: Sequence[NavTask], path: str | Path) -> None:
    """Write tasks with map paths made relative to the suite file where possible."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# map_file start_x,start_y,start_deg goal_x,goal_y,goal_deg seed"]
    for t in tasks:
        if t.map_path is None:
            raise MapFormatError(f"task {t.task_id} has no map file")
        mp = Path(t.map_path).resolve()
        try:
            ref = mp.relative_to(p.parent.resolve()).as_posix()
        except ValueError:
            ref = str(mp)
        lines.append(f"{ref} {_fmt_pose(t.start)} {_fmt_pose(t.goal)} {t.seed}")
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_worlds(tasks: Sequence[NavTask]) -> Dict[str, WorldMap]:
    """One WorldMap per distinct map file, keyed by task map_id."""
    worlds: Dict[str, WorldMap] = {}
    for t in tasks:
        if t.map_id in worlds:
            continue
        if t.map_path is None:
            raise MapFormatError(f"task {t.task_id} has no map file")
        costmap = load_costmap(t.map_path, map_id=t.map_id)
        worlds[t.map_id] = WorldMap.from_costmap(costmap, source_path=t.map_path)
    return worlds
