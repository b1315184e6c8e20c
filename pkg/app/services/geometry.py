"""
Geometry service for ISMForge.

This module enumerates the image sources of a shoebox room. Images live on
the mirror lattice: along each axis a signed index q says how often (|q|) and
starting from which wall (sign of q) the source was reflected.
"""

import logging
from typing import List, NamedTuple, Tuple

import numpy as np

from app.exceptions import DegenerateGeometryError, InvalidGeometryError, PreconditionError
from app.models.geometry import ImageSource, Shoebox, Vec3

logger = logging.getLogger(__name__)


class ImageLattice(NamedTuple):
    """Vectorised image set, rows sorted by (order, lattice index)."""
    positions: np.ndarray  # (K, 3)
    counts: np.ndarray  # (K, 6), SURFACE_NAMES order
    orders: np.ndarray  # (K,)
    indices: np.ndarray  # (K, 3) signed lattice index


def axis_reflection_counts(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Reflections off the near (coordinate 0) and far (coordinate L) wall."""
    mag = np.abs(q)
    up = (mag + 1) // 2
    down = mag // 2
    near = np.where(q >= 0, down, up)
    far = np.where(q >= 0, up, down)
    return near, far


def image_lattice(room: Shoebox, source: Vec3, max_order: int) -> ImageLattice:
    """
    All images of ``source`` up to ``max_order`` as arrays.

    Image coordinate along an axis of length L for a source at x:
    q*L + x for even q and (q+1)*L - x for odd q.
    """
    if max_order < 0:
        raise PreconditionError(f"max_order must be >= 0, got {max_order}")
    if not room.contains(source):
        raise InvalidGeometryError("source must lie strictly inside the room")

    span = np.arange(-max_order, max_order + 1)
    qx, qy, qz = (g.ravel() for g in np.meshgrid(span, span, span, indexing="ij"))
    q = np.column_stack([qx, qy, qz])
    orders = np.abs(q).sum(axis=1)
    keep = orders <= max_order
    q, orders = q[keep], orders[keep]

    # Stable ordering: order first, then lexicographic index
    perm = np.lexsort((q[:, 2], q[:, 1], q[:, 0], orders))
    q, orders = q[perm], orders[perm]

    dims = room.dims.as_array()
    src = source.as_array()
    odd = (q % 2) != 0
    positions = np.where(odd, (q + 1) * dims - src, q * dims + src)

    counts = np.empty((q.shape[0], 6), dtype=int)
    for axis in range(3):
        near, far = axis_reflection_counts(q[:, axis])
        counts[:, 2 * axis] = near
        counts[:, 2 * axis + 1] = far

    return ImageLattice(positions=positions, counts=counts, orders=orders, indices=q)


def enumerate_images(room: Shoebox, source: Vec3, max_order: int) -> List[ImageSource]:
    """Every image source of order <= ``max_order``, sorted by (order, lattice index)."""
    lattice = image_lattice(room, source, max_order)
    logger.debug(f"Enumerated {len(lattice.orders)} images up to order {max_order}")
    return [
        ImageSource(
            position=Vec3.from_array(pos),
            order=int(order),
            reflection_counts=tuple(int(c) for c in counts),
            lattice_index=tuple(int(i) for i in idx),
        )
        for pos, counts, order, idx in zip(lattice.positions, lattice.counts, lattice.orders, lattice.indices)
    ]


def image_count(order: int) -> int:
    """Number of 3-D lattice images of exactly ``order``."""
    if order == 0:
        return 1
    return 4 * order * order + 2


def image_geometry(image, ref_point: Vec3) -> Tuple[float, Vec3]:
    """
    Distance and unit direction from ``ref_point`` to the image.

    ``image`` may be an ImageSource or a plain Vec3.
    """
    position = image.position if isinstance(image, ImageSource) else image
    delta = position.as_array() - ref_point.as_array()
    r = float(np.linalg.norm(delta))
    if r <= 0.0:
        raise DegenerateGeometryError("image coincides with the reference point")
    return r, Vec3.from_array(delta / r)


def distances_and_directions(positions: np.ndarray, ref_point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised image_geometry: (K,) distances and (K, 3) unit directions."""
    delta = np.asarray(positions, dtype=float) - np.asarray(ref_point, dtype=float)[None, :]
    r = np.linalg.norm(delta, axis=1)
    if np.any(r <= 0.0):
        raise DegenerateGeometryError("an image coincides with the reference point")
    return r, delta / r[:, None]


def unmirror(image: ImageSource, room: Shoebox) -> Vec3:
    """Mirror an image back wall by wall until it lands in the room."""
    p = image.position.as_array().copy()
    dims = room.dims.as_array()
    for axis, q in enumerate(image.lattice_index):
        while q > 0:
            p[axis] = 2.0 * q * dims[axis] - p[axis]
            q -= 1
        while q < 0:
            p[axis] = 2.0 * (q + 1) * dims[axis] - p[axis]
            q += 1
    return Vec3.from_array(p)
