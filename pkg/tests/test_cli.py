import json

import pandas as pd

from planning.costmap.helpers import load_costmap, save_costmap
from runners.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, main


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["teleport"]) == EXIT_USAGE
    assert main(["plan", "--map", "m.txt", "--start", "0,0", "--goal", "1,1,0"]) == EXIT_USAGE
    assert main(["--help"]) == EXIT_OK


def test_genmap_writes_maps(tmp_path):
    out = tmp_path / "maps"
    code = main(["genmap", "--size", "60", "--corridor-width", "8", "--seed", "3", "--count", "2", "--out", str(out)])
    assert code == EXIT_OK
    assert load_costmap(out / "grid-3.txt").size_l == 60
    assert (out / "grid-4.txt").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["details"]["maps"]) == 2


def test_genmap_bad_spec_is_a_domain_error(tmp_path):
    assert main(["genmap", "--corridor-width", "2", "--out", str(tmp_path)]) == EXIT_DOMAIN


def _config(tmp_path):
    path = tmp_path / "fast.json"
    path.write_text(json.dumps({"rrtstar": {"max_iterations": 300}}))
    return str(path)


def test_plan_writes_path(tmp_path, make_costmap):
    map_path = tmp_path / "open.txt"
    save_costmap(make_costmap(40), map_path)
    out = tmp_path / "plan"
    code = main([
        "--config", _config(tmp_path), "plan", "--map", str(map_path),
        "--start", "0.5,2,0", "--goal", "3.5,2,0", "--seed", "1", "--out", str(out),
    ])
    assert code == EXIT_OK
    path = pd.read_csv(out / "path.csv")
    assert list(path.columns) == ["x", "y", "theta"]
    assert path["x"].iloc[0] == 0.5
    assert json.loads((out / "stats.json").read_text())["neural_calls"] == 1


def test_plan_failure_exit_code(tmp_path, make_costmap):
    map_path = tmp_path / "wall.txt"
    save_costmap(make_costmap(40, obstacles=[(20, iy) for iy in range(40)]), map_path)
    code = main([
        "plan", "--map", str(map_path), "--start", "0.5,2,0", "--goal", "3.5,2,0",
        "--no-fallback", "--out", str(tmp_path / "plan"),
    ])
    assert code == EXIT_DOMAIN


def test_missing_map_is_a_domain_error(tmp_path):
    code = main([
        "plan", "--map", str(tmp_path / "absent.txt"), "--start", "0.5,2,0", "--goal", "3.5,2,0",
        "--out", str(tmp_path / "plan"),
    ])
    assert code == EXIT_DOMAIN


def test_latency_counts_include_sample_resolution(tmp_path):
    over = tmp_path / "samples.json"
    over.write_text(json.dumps({"planner": {"sample_resolution": 7}}))
    out = tmp_path / "latency"
    assert main(["--config", str(over), "latency", "--runs", "1", "--out", str(out)]) == EXIT_OK
    table = pd.read_csv(out / "latency.csv")
    assert table["n_samples"].tolist() == [5, 7, 10, 25, 50]
    medians = json.loads((out / "manifest.json").read_text())["details"]["median_ms"]
    assert "7" in medians
