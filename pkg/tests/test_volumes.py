"""Tile grid layout, the spill file format, residency accounting, placement."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tilefusion import (
    AllocationPolicy,
    DepthFrame,
    FusionParams,
    Pose,
    TsdfSubvolume,
    VolumeSet,
    bin_endpoints,
    init_grid,
    load_subvolume,
    save_subvolume,
    update_allocation,
)
from tilefusion.volumes import SPILL_MAGIC, spill_file_size

PARAMS = FusionParams(truncation=0.4, max_weight=128.0)


def random_volume(rng, n=6):
    vol = TsdfSubvolume.empty(np.array([-3, 2, 7]), n, 0.1 * n)
    vol.tsdf[:] = rng.uniform(-0.4, 0.4, size=vol.tsdf.shape).astype(np.float32)
    vol.weight[:] = rng.uniform(0.0, 128.0, size=vol.weight.shape).astype(np.float32)
    return vol


def test_spill_file_size_formula():
    # 52-byte header + 8 bytes per voxel (f32 value + f32 weight)
    assert spill_file_size(8) == 52 + 8 * 8**3 == 4148


def test_spill_roundtrip_bit_exact(tmp_path):
    vol = random_volume(np.random.default_rng(0))
    path = tmp_path / "vol.tsdv"
    written = save_subvolume(path, vol, PARAMS)
    assert written == spill_file_size(6) == path.stat().st_size
    back, params = load_subvolume(path)
    assert np.array_equal(back.tsdf, vol.tsdf)
    assert np.array_equal(back.weight, vol.weight)
    assert np.array_equal(back.origin_voxel, vol.origin_voxel)
    assert back.side_length == vol.side_length
    # header floats are f32
    assert params.truncation == np.float32(PARAMS.truncation)
    assert params.max_weight == PARAMS.max_weight


def test_spill_rejects_corruption(tmp_path):
    vol = random_volume(np.random.default_rng(1))
    path = tmp_path / "vol.tsdv"
    save_subvolume(path, vol, PARAMS)
    raw = bytearray(path.read_bytes())

    bad_magic = tmp_path / "magic.tsdv"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_subvolume(bad_magic)

    truncated = tmp_path / "short.tsdv"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_subvolume(truncated)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2**31))
def test_spill_roundtrip_property(tmp_path_factory, seed):
    vol = random_volume(np.random.default_rng(seed), n=4)
    path = tmp_path_factory.mktemp("spill") / "v.tsdv"
    save_subvolume(path, vol, PARAMS)
    back, _ = load_subvolume(path)
    assert np.array_equal(back.tsdf, vol.tsdf)
    assert np.array_equal(back.weight, vol.weight)


def test_init_grid_divisible():
    spec = init_grid(3.0, 124, 62)
    assert spec.voxels_per_side == 64
    assert spec.spacing == 62
    assert spec.voxel_size == pytest.approx(3.0 / 124)
    assert spec.subvolume_side_length == pytest.approx(64 * 3.0 / 124)
    assert len(spec.keys) == 8
    # covered cube is 126 voxels, centered in x/y, starting at z=0
    assert spec.keys[0] == (-63, -63, 0)
    assert (-63, -63, 62) in spec.keys
    assert (-1, -1, 62) in spec.keys


def test_init_grid_single_reference():
    spec = init_grid(3.0, 124, 124)
    assert spec.voxels_per_side == 126
    assert spec.keys == ((-63, -63, 0),)


def test_init_grid_rounds_up_with_warning():
    with pytest.warns(UserWarning, match="not a multiple"):
        spec = init_grid(1.0, 10, 4)
    # 3 tiles per axis cover 12 > 10 interior voxels
    assert len(spec.keys) == 27
    assert spec.voxels_per_side == 6
    xs = sorted({k[0] for k in spec.keys})
    assert xs == [-6, -2, 2]


def test_init_grid_validation():
    with pytest.raises(ValueError):
        init_grid(1.0, 4, 8)
    with pytest.raises(ValueError):
        init_grid(1.0, 0, 1)


def make_set(tmp_path, max_resident, n=4):
    return VolumeSet(
        PARAMS,
        voxels_per_side=n,
        voxel_size=0.1,
        max_resident=max_resident,
        spill_dir=tmp_path,
    )


def test_volume_set_lifecycle(tmp_path):
    vs = make_set(tmp_path, max_resident=2)
    vs.add((0, 0, 0))
    assert (0, 0, 0) in vs and len(vs) == 1
    vol = vs.acquire((0, 0, 0))
    vol.tsdf[0, 0, 0] = 0.25
    with pytest.raises(RuntimeError):
        vs.acquire((0, 0, 0))
    vs.release((0, 0, 0))
    with pytest.raises(RuntimeError):
        vs.release((0, 0, 0))
    with pytest.raises(KeyError):
        vs.acquire((9, 9, 9))
    # re-acquire sees the same arrays while resident
    assert vs.acquire((0, 0, 0)).tsdf[0, 0, 0] == np.float32(0.25)


def test_eviction_is_least_recently_used(tmp_path):
    vs = make_set(tmp_path, max_resident=2)
    for key in [(0, 0, 0), (4, 0, 0), (8, 0, 0)]:
        vs.add(key)
    a, b, c = (0, 0, 0), (4, 0, 0), (8, 0, 0)
    vs.acquire(a)
    vs.release(a)
    vs.acquire(b)
    vs.release(b)
    # a is LRU; loading c should spill exactly a
    vs.acquire(c)
    vs.release(c)
    assert vs.files_written == 1
    assert vs.spill_path(a).exists()
    assert not vs.spill_path(b).exists()
    # touching a again reloads it from disk
    vs.acquire(a)
    vs.release(a)
    assert vs.files_read == 1
    assert vs.bytes_read == spill_file_size(4)


def test_live_tiles_survive_pressure(tmp_path):
    vs = make_set(tmp_path, max_resident=1)
    vs.add((0, 0, 0))
    vs.add((4, 0, 0))
    vs.acquire((0, 0, 0))
    # budget is full of live data; the second acquire must overflow, not evict
    vs.acquire((4, 0, 0))
    assert vs.resident_count == 2
    assert vs.files_written == 0
    vs.release((0, 0, 0))
    vs.release((4, 0, 0))


def test_round_robin_transfer_counts(tmp_path):
    # budget 1 with three tiles: the first sweep only spills the two it
    # displaces, every later sweep reloads and spills all three
    vs = make_set(tmp_path, max_resident=1)
    keys = [(0, 0, 0), (4, 0, 0), (8, 0, 0)]
    for key in keys:
        vs.add(key)

    def sweep():
        for key in keys:
            vs.acquire(key)
            vs.release(key)

    sweep()
    assert (vs.files_read, vs.files_written) == (0, 2)
    sweep()
    assert (vs.files_read, vs.files_written) == (3, 5)
    sweep()
    assert (vs.files_read, vs.files_written) == (6, 8)
    assert vs.bytes_written == 8 * spill_file_size(4)


def test_remove_returns_archived_state(tmp_path):
    vs = make_set(tmp_path, max_resident=1)
    vs.add((0, 0, 0))
    vs.add((4, 0, 0))
    vol = vs.acquire((0, 0, 0))
    vol.tsdf[1, 2, 3] = 0.125
    vs.release((0, 0, 0))
    vs.acquire((4, 0, 0))  # spills (0,0,0) to disk
    vs.release((4, 0, 0))
    archived = vs.remove((0, 0, 0))
    assert archived.tsdf[1, 2, 3] == np.float32(0.125)
    assert (0, 0, 0) not in vs
    assert not vs.spill_path((0, 0, 0)).exists()


def test_flush_persists_without_evicting(tmp_path):
    vs = make_set(tmp_path, max_resident=4)
    for key in [(0, 0, 0), (4, 0, 0)]:
        vs.add(key)
        vs.acquire(key)
        vs.release(key)
    vs.flush()
    assert vs.resident_count == 2
    assert vs.files_written == 2
    assert vs.spill_path((0, 0, 0)).exists()
    assert vs.spill_path((4, 0, 0)).exists()


def test_volume_set_validation(tmp_path):
    with pytest.raises(ValueError):
        make_set(tmp_path, max_resident=0)
    vs = make_set(tmp_path, max_resident=1)
    vs.add((0, 0, 0))
    with pytest.raises(ValueError):
        vs.add((0, 0, 0))


def test_bin_endpoints_single_pixel(small_intr):
    depth = np.zeros((60, 80))
    depth[30, 40] = 2.0  # optical axis, endpoint (0, 0, 2)
    counts = bin_endpoints(DepthFrame(depth), small_intr, Pose.identity(), 30, 0.05)
    # block side = 30 * 0.05 = 1.5 m; (0,0,2) falls in cell (0,0,1)
    assert counts == {(0, 0, 30): 1}


def test_bin_endpoints_uses_ray_length_along_unit_ray(small_intr):
    depth = np.zeros((60, 80))
    depth[30, 60] = 2.0  # ray (0.2, 0, 1)/|.|; endpoint 2 m along it
    counts = bin_endpoints(DepthFrame(depth), small_intr, Pose.identity(), 30, 0.05)
    ((key, count),) = counts.items()
    assert count == 1
    # endpoint x = 2*0.2/sqrt(1.04) = 0.392 < 1.5, z = 1.961 > 1.5
    assert key == (0, 0, 30)


def test_bin_endpoints_negative_cells(small_intr):
    depth = np.zeros((60, 80))
    depth[30, 40] = 2.0
    behind = Pose(np.eye(3), np.array([-2.0, 0.0, 0.0]))
    counts = bin_endpoints(DepthFrame(depth), small_intr, behind, 30, 0.05)
    assert counts == {(-60, 0, 30): 1}


def test_bin_endpoints_empty_frame(small_intr):
    counts = bin_endpoints(DepthFrame(np.zeros((60, 80))), small_intr, Pose.identity(), 30, 0.05)
    assert counts == {}


def test_allocation_fills_free_slots_by_count():
    policy = AllocationPolicy(max_volumes=2)
    added, removed = update_allocation([], {(0, 0, 0): 5, (30, 0, 0): 9, (60, 0, 0): 1}, policy)
    assert added == [(30, 0, 0), (0, 0, 0)]
    assert removed == []


def test_allocation_hysteresis_blocks_marginal_swap():
    policy = AllocationPolicy(max_volumes=1, hysteresis=1.5)
    current = [(0, 0, 0)]
    added, removed = update_allocation(current, {(0, 0, 0): 10, (30, 0, 0): 14}, policy)
    assert (added, removed) == ([], [])
    # 16 > 1.5 * 10 clears the bar
    added, removed = update_allocation(current, {(0, 0, 0): 10, (30, 0, 0): 16}, policy)
    assert (added, removed) == ([(30, 0, 0)], [(0, 0, 0)])


def test_allocation_ignores_zero_counts_and_ties_lexicographically():
    policy = AllocationPolicy(max_volumes=2)
    counts = {(30, 0, 0): 4, (0, 30, 0): 4, (60, 0, 0): 0}
    added, removed = update_allocation([], counts, policy)
    assert added == [(0, 30, 0), (30, 0, 0)]
    assert removed == []


def test_allocation_unseen_incumbent_counts_as_zero():
    policy = AllocationPolicy(max_volumes=1, hysteresis=1.5)
    added, removed = update_allocation([(0, 0, 0)], {(30, 0, 0): 1}, policy)
    assert (added, removed) == ([(30, 0, 0)], [(0, 0, 0)])


def test_allocation_policy_validation():
    with pytest.raises(ValueError):
        AllocationPolicy(max_volumes=0)
    with pytest.raises(ValueError):
        AllocationPolicy(max_volumes=1, hysteresis=0.5)


@settings(max_examples=50, deadline=None)
@given(
    n_current=st.integers(min_value=0, max_value=6),
    counts=st.dictionaries(
        st.tuples(
            st.integers(min_value=-3, max_value=3),
            st.integers(min_value=-3, max_value=3),
            st.integers(min_value=0, max_value=3),
        ),
        st.integers(min_value=0, max_value=100),
        max_size=12,
    ),
    max_volumes=st.integers(min_value=1, max_value=6),
)
def test_allocation_respects_budget_and_uniqueness(n_current, counts, max_volumes):
    scaled = {(k[0] * 30, k[1] * 30, k[2] * 30): c for k, c in counts.items()}
    current = [(i * 30, -30, 0) for i in range(min(n_current, max_volumes))]
    policy = AllocationPolicy(max_volumes=max_volumes)
    added, removed = update_allocation(current, scaled, policy)
    after = [k for k in current if k not in removed] + added
    assert len(after) <= max_volumes
    assert len(set(after)) == len(after)
    assert all(k in current for k in removed)
    assert all(k not in current for k in added)
