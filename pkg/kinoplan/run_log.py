# kinoplan/run_log.py
from __future__ import annotations
import json
import os
import platform
import subprocess
import sys
import uuid
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

from kinoplan.log import get_logger

_logger = get_logger("kinoplan.run_log")

# run_id -> manifest path, so end-of-run details land beside the outputs
_open_runs: Dict[str, Path] = {}


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent.parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except Exception:
        _logger.debug("git describe unavailable")
    return "unknown"


def hardware_note() -> Dict[str, Any]:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor(),
        "cpu_count": os.cpu_count(),
        "python": sys.version.split()[0],
    }


def write_json(obj: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, default=str)


def safe_log_run_start(run_id: str, stage: str, out_dir: str | Path, meta: Dict[str, Any]) -> Optional[Path]:
    """
    Write manifest.json beside the run outputs. Never raises.
    """
    try:
        path = Path(out_dir) / "manifest.json"
        manifest = {
            "run_id": run_id,
            "stage": stage,
            "started_at": now_iso(),
            "git_describe": git_describe(),
            "hardware": hardware_note(),
            **meta,
        }
        write_json(manifest, path)
        _open_runs[run_id] = path
        return path
    except Exception:
        _logger.exception("safe_log_run_start failed (ignored)")
        return None


def safe_log_run_end(run_id: str, success: bool, details: Dict[str, Any]) -> None:
    try:
        path = _open_runs.pop(run_id, None)
        if path is None:
            _logger.debug("safe_log_run_end: no manifest open for run %s", run_id)
            return
        manifest = json.loads(path.read_text(encoding="utf-8"))
        manifest.update({"ended_at": now_iso(), "success": success, "details": details})
        write_json(manifest, path)
    except Exception:
        _logger.exception("safe_log_run_end failed (ignored)")


@contextmanager
def logged_run(stage: str, out_dir: str | Path, meta: Dict[str, Any]) -> Iterator[Dict[str, Any]]:
    """
    Open a manifest for one runner invocation and close it on exit. The
    yielded dict collects details for the end-of-run record.
    """
    run_id = str(uuid.uuid4())
    details: Dict[str, Any] = {"run_id": run_id}
    safe_log_run_start(run_id, stage, out_dir, meta)
    try:
        yield details
    except Exception as e:
        details["error"] = f"{type(e).__name__}: {e}"
        safe_log_run_end(run_id, False, details)
        raise
    safe_log_run_end(run_id, True, details)
