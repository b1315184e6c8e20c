import itertools

import numpy as np
import pytest

from app.exceptions import DegenerateGeometryError, InvalidGeometryError, PreconditionError
from app.models import Shoebox, Vec3
from app.services.geometry import (
    axis_reflection_counts,
    distances_and_directions,
    enumerate_images,
    image_count,
    image_geometry,
    image_lattice,
    unmirror,
)

SOURCE = Vec3(x=1.1, y=3.3, z=0.9)


def brute_force_axis(x: float, length: float, max_order: int):
    """(coordinate, order, near, far) per axis from the (n, p) image formula."""
    entries = []
    for n in range(-max_order, max_order + 1):
        for p in (0, 1):
            order = abs(2 * n - p)
            if order > max_order:
                continue
            coordinate = 2 * n * length + (x if p == 0 else -x)
            entries.append((coordinate, order, abs(n - p), abs(n)))
    return entries


def brute_force_images(room: Shoebox, source: Vec3, max_order: int):
    axes = [
        brute_force_axis(source.x, room.dims.x, max_order),
        brute_force_axis(source.y, room.dims.y, max_order),
        brute_force_axis(source.z, room.dims.z, max_order),
    ]
    images = set()
    for ex, ey, ez in itertools.product(*axes):
        order = ex[1] + ey[1] + ez[1]
        if order > max_order:
            continue
        counts = (ex[2], ex[3], ey[2], ey[3], ez[2], ez[3])
        images.add((round(ex[0], 9), round(ey[0], 9), round(ez[0], 9), order, counts))
    return images


@pytest.mark.parametrize("max_order", [0, 1, 2, 4])
def test_enumerate_matches_brute_force(room, max_order):
    images = enumerate_images(room, SOURCE, max_order)
    found = {
        (round(i.position.x, 9), round(i.position.y, 9), round(i.position.z, 9), i.order, i.reflection_counts)
        for i in images
    }
    assert len(found) == len(images)
    assert found == brute_force_images(room, SOURCE, max_order)


@pytest.mark.parametrize("order", range(0, 7))
def test_exact_order_counts(room, order):
    orders = image_lattice(room, SOURCE, 6).orders
    assert int(np.sum(orders == order)) == image_count(order)


def test_order_zero_is_the_source(room):
    images = enumerate_images(room, SOURCE, 0)
    assert len(images) == 1
    assert images[0].order == 0
    assert images[0].position == SOURCE
    assert images[0].reflection_counts == (0, 0, 0, 0, 0, 0)


def test_sorted_by_order_then_index(room):
    lattice = image_lattice(room, SOURCE, 3)
    keys = [(int(o), *map(int, q)) for o, q in zip(lattice.orders, lattice.indices)]
    assert keys == sorted(keys)


def test_first_order_images_mirror_one_wall(room):
    images = [i for i in enumerate_images(room, SOURCE, 1) if i.order == 1]
    west = next(i for i in images if i.reflection_counts[0] == 1)
    assert west.position.x == pytest.approx(-SOURCE.x)
    assert west.lattice_index == (-1, 0, 0)
    east = next(i for i in images if i.reflection_counts[1] == 1)
    assert east.position.x == pytest.approx(2 * room.dims.x - SOURCE.x)
    assert east.lattice_index == (1, 0, 0)


def test_axis_counts_sum_to_order():
    q = np.arange(-9, 10)
    near, far = axis_reflection_counts(q)
    assert np.array_equal(near + far, np.abs(q))
    assert np.all(np.abs(near - far) <= 1)


def test_unmirror_recovers_source(room):
    for image in enumerate_images(room, SOURCE, 4):
        back = unmirror(image, room)
        assert np.allclose(back.as_array(), SOURCE.as_array(), atol=1e-9)


def test_image_distance_grows_with_lattice(room):
    lattice = image_lattice(room, SOURCE, 3)
    r, directions = distances_and_directions(lattice.positions, SOURCE.as_array() + 0.5)
    assert np.allclose(np.linalg.norm(directions, axis=1), 1.0)
    assert np.all(r > 0)


def test_image_geometry_accepts_vec3(room):
    r, direction = image_geometry(Vec3(x=3.0, y=4.0, z=0.0), Vec3(x=0.0, y=0.0, z=0.0))
    assert r == pytest.approx(5.0)
    assert direction.as_array() == pytest.approx([0.6, 0.8, 0.0])


def test_image_geometry_degenerate():
    with pytest.raises(DegenerateGeometryError):
        image_geometry(SOURCE, SOURCE)


def test_negative_order_rejected(room):
    with pytest.raises(PreconditionError):
        enumerate_images(room, SOURCE, -1)


@pytest.mark.parametrize("point", [(0.0, 1.0, 1.0), (4.0, 1.0, 1.0), (1.0, 6.0, 1.0)])
def test_source_on_or_outside_wall_rejected(room, point):
    with pytest.raises(InvalidGeometryError):
        enumerate_images(room, Vec3(x=point[0], y=point[1], z=point[2]), 2)
