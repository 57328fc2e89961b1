import math

import numpy as np
import pytest

from kinoplan.errors import (
    DatasetChecksumError,
    DatasetError,
    DatasetFormatError,
    DatasetTruncatedError,
    DatasetVersionError,
    InvalidInputError,
    SampleOutsideWindowError,
)
from planning.costmap.core import Footprint, collision_free_mask
from planning.dataset.core import (
    CollectConfig,
    Dataset,
    TrainingTuple,
    TrajectoryRecord,
    augment,
    collect,
    decode_state,
    derive_seed,
    encode_records,
    encode_sample,
    encode_state,
)
from planning.dataset.helpers import dump_dataset, load_dataset, parse_dataset, save_dataset
from planning.geometry.core import Pose2D
from planning.rrtstar.core import RRTStarConfig


def _line_record(n, spacing=0.2, x0=2.0, y0=2.0, map_id="test"):
    poses = [Pose2D.of(x0 + k * spacing, y0, 0.0) for k in range(n)]
    return TrajectoryRecord(map_id=map_id, poses=poses, source_seed=7)


def _tiny_dataset(n=3, l=2):
    rng = np.random.default_rng(0)
    tuples = []
    for k in range(n):
        th = rng.uniform(-math.pi, math.pi)
        head = [math.cos(th), math.sin(th)]
        tuples.append(TrainingTuple(
            current=np.array([0.0, 0.0] + head),
            goal=np.array([0.5, -0.25] + head),
            patch_raw=rng.integers(0, 256, size=(2 * l, 2 * l), dtype=np.uint8),
            target=np.array([0.1, 0.0] + head),
            trajectory_id=k // 2,
        ))
    return Dataset.from_tuples(tuples, l, 0.1)


# ---- State encoding ----
def test_current_state_encodes_at_origin():
    p = Pose2D.of(3.0, -1.0, 0.7)
    assert encode_state(p, p, 4.0) == pytest.approx([0.0, 0.0, math.cos(0.7), math.sin(0.7)])


def test_decode_inverts_encode():
    center = Pose2D.of(1.0, 2.0, 0.0)
    p = Pose2D.of(2.5, 0.5, -2.0)
    back = decode_state(encode_state(p, center, 4.0), center, 4.0)
    assert back.distance_to(p) < 1e-12 and back.heading_error(p) < 1e-12


def test_tuple_rejects_positions_outside_window():
    with pytest.raises(ValueError):
        TrainingTuple(
            current=np.array([0.0, 0.0, 1.0, 0.0]),
            goal=np.array([1.5, 0.0, 1.0, 0.0]),
            patch_raw=np.zeros((4, 4), dtype=np.uint8),
            target=np.array([0.1, 0.0, 1.0, 0.0]),
        )


# ---- encode_sample ----
def test_encode_sample_centers_patch_on_current_pose(make_costmap):
    cm = make_costmap(40, obstacles=[(25, 20)])
    record = _line_record(3)
    tt = encode_sample(record, 1, cm, 40)
    assert tt.patch_raw.shape == (80, 80)
    # the current cell (22, 20) sits at (40, 40); the obstacle three cells to its right
    assert tt.patch_raw[40, 43] == 255
    assert tt.patch_raw[40, 40] == 0
    assert tt.current == pytest.approx([0.0, 0.0, 1.0, 0.0])
    assert tt.target == pytest.approx([0.05, 0.0, 1.0, 0.0])
    assert tt.goal == pytest.approx([0.05, 0.0, 1.0, 0.0])
    assert tt.costmap_patch.max() == pytest.approx(1.0)


def test_encode_sample_crops_window_around_current_pose(make_costmap):
    record = TrajectoryRecord(
        map_id="test",
        poses=[Pose2D.of(2.0, 2.0, 0.0), Pose2D.of(2.1, 2.0, 0.0), Pose2D.of(2.2, 2.0, 0.0)],
        source_seed=0,
    )
    tt = encode_sample(record, 1, make_costmap(40), 4)
    assert tt.patch_raw.shape == (8, 8)
    # map columns 19..22 land at patch columns 2..5, the current cell 21 at column 4
    assert tt.patch_raw[4, 4] == 0 and tt.patch_raw[4, 5] == 0
    assert tt.patch_raw[4, 2] == 0
    assert tt.patch_raw[4, 1] == 255 and tt.patch_raw[4, 6] == 255
    assert tt.goal == pytest.approx([0.25, 0.0, 1.0, 0.0])
    assert tt.target == pytest.approx([0.25, 0.0, 1.0, 0.0])


def test_encode_sample_rejects_far_goal(make_costmap):
    cm = make_costmap(40)
    record = TrajectoryRecord(
        map_id="test",
        poses=[Pose2D.of(1.0, 1.0, 0.0), Pose2D.of(1.1, 1.0, 0.0), Pose2D.of(2.0, 1.0, 0.0)],
        source_seed=0,
    )
    with pytest.raises(SampleOutsideWindowError):
        encode_sample(record, 0, cm, 4)


def test_encode_sample_step_range(make_costmap):
    with pytest.raises(InvalidInputError):
        encode_sample(_line_record(3), 2, make_costmap(40), 40)


# ---- Augmentation ----
def test_augment_enumerates_contiguous_subpaths():
    subs = augment(_line_record(5), window_extent=4.0)
    spans = sorted((round((s.poses[0].x - 2.0) / 0.2), len(s.poses)) for s in subs)
    assert spans == [(0, 3), (0, 4), (0, 5), (1, 3), (1, 4), (2, 3)]


def test_augment_respects_window_extent():
    subs = augment(_line_record(5), window_extent=0.5)
    assert len(subs) == 3
    assert all(len(s.poses) == 3 for s in subs)


def test_record_needs_two_poses():
    with pytest.raises(ValueError):
        TrajectoryRecord(map_id="m", poses=[Pose2D.of(0, 0, 0)], source_seed=0)


# ---- Collection ----
def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(5, 3) == derive_seed(5, 3)
    assert len({derive_seed(5, i) for i in range(100)}) == 100


@pytest.fixture
def small_world(make_costmap):
    return make_costmap(10, resolution=0.5, obstacles=[(4, 4), (5, 4), (4, 5), (5, 5)], map_id="small")


@pytest.fixture
def fast_rrt():
    return RRTStarConfig(max_iterations=300)


def test_collect_is_deterministic_and_collision_free(small_world, model, fast_rrt):
    cc = CollectConfig(window_l=10)
    a = collect([small_world], 4, model, fast_rrt, seed=11, collect_config=cc)
    b = collect([small_world], 4, model, fast_rrt, seed=11, collect_config=cc)
    assert a == b
    assert 1 <= len(a) <= 4
    fp = Footprint()
    for rec in a:
        assert rec.map_id == "small"
        xy = np.array([[p.x, p.y] for p in rec.poses])
        assert np.all(collision_free_mask(small_world, xy, fp))
        gaps = np.hypot(*np.diff(xy, axis=0).T)
        assert gaps.max() <= 1.5 * cc.waypoint_spacing
        assert rec.poses[0].distance_to(rec.poses[-1]) >= cc.min_distance - 1e-9 - fast_rrt.goal_pos_tol


@pytest.mark.slow
def test_collect_does_not_depend_on_worker_count(small_world, model, fast_rrt):
    one = collect([small_world], 6, model, fast_rrt, seed=2, workers=1)
    two = collect([small_world], 6, model, fast_rrt, seed=2, workers=2)
    assert one == two


def test_collect_edge_cases(make_costmap, small_world, model, fast_rrt):
    assert collect([small_world], 0, model, fast_rrt, seed=0) == []
    with pytest.raises(DatasetError):
        collect([], 2, model, fast_rrt, seed=0)
    blocked = make_costmap(3, obstacles=[(ix, iy) for ix in range(3) for iy in range(3) if (ix, iy) != (1, 1)])
    with pytest.raises(DatasetError):
        collect([blocked], 2, model, fast_rrt, seed=0)
    with pytest.raises(InvalidInputError):
        collect([small_world], 2, model, fast_rrt, seed=0, workers=0)


def test_encode_records_assigns_trajectory_ids(make_costmap):
    cm = make_costmap(40)
    recs = [_line_record(4), _line_record(4, y0=2.5)]
    plain = encode_records(recs, {"test": cm}, 40, augment_paths=False)
    assert len(plain) == 6
    assert plain.trajectory_ids.tolist() == [0, 0, 0, 1, 1, 1]
    assert plain.patches.shape == (6, 80, 80)

    grown = encode_records(recs, {"test": cm}, 40)
    # sub-paths (0,2) (0,3) (1,3) per record: 2 + 3 + 2 steps
    assert len(grown) == 2 * 7
    assert len(set(grown.trajectory_ids.tolist())) == 6

    limited = encode_records(recs, {"test": cm}, 40, augment_limit=1)
    assert len(set(limited.trajectory_ids.tolist())) == 2


def test_encode_records_empty():
    ds = encode_records([], {}, 8)
    assert len(ds) == 0 and ds.patches.shape == (0, 16, 16)


# ---- Dataset ----
def test_dataset_indexing_and_arrays():
    ds = _tiny_dataset()
    assert len(ds) == 3
    assert np.array_equal(ds[1].patch_raw, ds.patches[1])
    arrays = ds.as_arrays(np.array([0, 2]))
    assert arrays["patch"].dtype == np.float32 and arrays["patch"].max() <= 1.0
    assert arrays["trajectory_ids"].tolist() == [0, 1]
    assert len(ds.subset(np.array([2]))) == 1


# ---- KPDS files ----
def test_kpds_v2_keeps_trajectory_ids(tmp_path):
    ds = _tiny_dataset()
    path = tmp_path / "d.kpds"
    save_dataset(path, ds, version=2)
    back = load_dataset(path)
    assert back.l == 2 and back.resolution == pytest.approx(0.1)
    for name in ("current", "goal", "target", "patches"):
        assert np.array_equal(getattr(back, name), getattr(ds, name))
    assert back.trajectory_ids.tolist() == ds.trajectory_ids.tolist()


def test_kpds_v1_has_no_trajectory_ids():
    back = parse_dataset(dump_dataset(_tiny_dataset(), version=1))
    assert back.trajectory_ids.tolist() == [-1, -1, -1]


def test_kpds_empty_dataset():
    back = parse_dataset(dump_dataset(Dataset.empty(4, 0.25), version=2))
    assert len(back) == 0 and back.l == 4


def test_kpds_header_layout():
    raw = dump_dataset(_tiny_dataset(n=1, l=1), version=1)
    # header 24 + record (current 16, goal 16, costs 4, target 16) + crc 4
    assert len(raw) == 24 + 52 + 4
    assert raw[:4] == b"KPDS"


@pytest.mark.parametrize(
    "mutate, error",
    [
        (lambda b: b"KPDX" + b[4:], DatasetFormatError),
        (lambda b: b[:4] + (3).to_bytes(4, "little") + b[8:], DatasetVersionError),
        (lambda b: b[:-10], DatasetTruncatedError),
        (lambda b: b[:12], DatasetTruncatedError),
        (lambda b: b + b"\x00", DatasetFormatError),
        (lambda b: b[:30] + bytes([b[30] ^ 0xFF]) + b[31:], DatasetChecksumError),
    ],
)
def test_kpds_corruption_is_detected(mutate, error):
    raw = dump_dataset(_tiny_dataset(), version=2)
    with pytest.raises(error):
        parse_dataset(mutate(raw))


def test_cannot_write_unknown_version():
    with pytest.raises(DatasetVersionError):
        dump_dataset(_tiny_dataset(), version=9)
