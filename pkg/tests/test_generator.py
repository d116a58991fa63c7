import numpy as np
import pytest

from navbench.generator import GeneratorParams, generate_scene
from navbench.geometry import dilate, free_components
from navbench.scene import build_occupancy, dumps_canonical, scene_to_dict

PARAMS = GeneratorParams()


def test_same_seed_byte_identical():
    a = generate_scene(PARAMS, 42)
    b = generate_scene(PARAMS, 42)
    assert dumps_canonical(scene_to_dict(a)) == dumps_canonical(scene_to_dict(b))
    assert a == b


def test_different_seeds_differ():
    a = generate_scene(PARAMS, 1)
    b = generate_scene(PARAMS, 2)
    assert a != b


def test_room_counts_within_range():
    for seed in range(25):
        scene = generate_scene(PARAMS, seed)
        assert 2 <= len(scene.rooms) <= 8


def test_scenes_are_valid_and_connected():
    for seed in range(12):
        scene = generate_scene(PARAMS, seed)
        scene.validate()
        grid = build_occupancy(scene, PARAMS.resolution, PARAMS.agent_height)
        nav = dilate(grid, PARAMS.agent_radius)
        _, count = free_components(nav)
        assert count == 1
        assert (~nav.cells).sum() > 0


def test_navigable_area_varies():
    fractions = []
    for seed in range(12):
        scene = generate_scene(PARAMS, seed)
        grid = build_occupancy(scene, 0.1, PARAMS.agent_height)
        nav = dilate(grid, PARAMS.agent_radius)
        fractions.append((~nav.cells).sum() * nav.resolution ** 2)
    assert np.std(fractions) > 1.0  # square meters of navigable area vary


def test_objects_have_unique_ids_and_known_rooms():
    scene = generate_scene(PARAMS, 7)
    ids = [o.object_id for o in scene.objects]
    assert len(ids) == len(set(ids))
    room_ids = {r.room_id for r in scene.rooms}
    for o in scene.objects:
        assert o.room_id in room_ids or o.room_id == "none"
