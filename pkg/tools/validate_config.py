# tools/validate_config.py
import json
import sys
from pathlib import Path

import jsonschema

ROOT = Path(__file__).resolve().parent.parent


def validate(config_path: Path = ROOT / "config" / "defaults.json") -> None:
    schema = json.loads((ROOT / "config" / "schema.json").read_text(encoding="utf-8"))
    config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    jsonschema.validate(config, schema)


if __name__ == "__main__":
    validate(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "config" / "defaults.json")
    print("config validation OK")
