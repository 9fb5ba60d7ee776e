"""Station poses, antenna array layouts and rigid-body rotations.

Angles follow the yaw/pitch/roll convention ``(alpha, beta, gamma)`` with the
rotation ``R = Rz(alpha) @ Ry(beta) @ Rx(gamma)`` (counterclockwise).
Element ordering of the planar layouts is row-major, ``i // k`` along the first
in-plane axis and ``i % k`` along the second, with ``i = 0 .. N-1``; every
per-antenna vector in the package uses this ordering.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

_PLANE_AXES = {"xz": (0, 2), "yz": (1, 2), "xy": (0, 1)}
_POLE_TOL = 1e-12


class DegenerateGeometryError(ValueError):
    """Raised when two centroids coincide and no bearing can be defined."""


@dataclass(frozen=True, eq=False)
class StationPose:
    """Centroid (m) and orientation ``(alpha, beta, gamma)`` (rad) of a station."""

    centroid: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        centroid = np.asarray(self.centroid, dtype=float).reshape(3)
        orientation = np.asarray(self.orientation, dtype=float).reshape(3)
        if not np.all(np.isfinite(orientation)):
            raise ValueError("orientation angles must be finite")
        if not np.all(np.isfinite(centroid)):
            raise ValueError("centroid must be finite")
        object.__setattr__(self, "centroid", centroid)
        object.__setattr__(self, "orientation", orientation)


@dataclass(frozen=True, eq=False)
class ArrayLayout:
    """Element offsets (m) of an array relative to its centroid, before rotation."""

    initial_positions: np.ndarray
    spacing: float | None = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.initial_positions, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("initial_positions must have shape (N, 3) with N >= 1")
        object.__setattr__(self, "initial_positions", pos)

    @property
    def element_count(self) -> int:
        return self.initial_positions.shape[0]


def planar_layout(element_count: int, spacing: float, plane: str = "xy",
                  centered: bool = True) -> ArrayLayout:
    """Square planar grid of ``element_count`` elements in the given plane.

    Parameters
    ----------
    element_count : int
        Number of elements; must be a perfect square.
    spacing : float
        Inter-element spacing in meters.
    plane : {"xy", "xz", "yz"}
        Plane containing the grid (MS, BS and RIS defaults respectively).
    centered : bool
        Subtract the element mean so the centroid coincides with the array
        phase reference.
    """
    k = int(round(np.sqrt(element_count)))
    if element_count < 1 or k * k != element_count:
        raise ValueError(f"planar layout needs a perfect-square element count, got {element_count}")
    if plane not in _PLANE_AXES:
        raise ValueError(f"unknown plane {plane!r}; expected one of {sorted(_PLANE_AXES)}")
    i = np.arange(element_count)
    pos = np.zeros((element_count, 3))
    first, second = _PLANE_AXES[plane]
    pos[:, first] = i // k
    pos[:, second] = i % k
    pos *= spacing
    if centered:
        pos -= pos.mean(axis=0)
    return ArrayLayout(pos, spacing=spacing)


def rotation_matrix(orientation) -> np.ndarray:
    """Return ``Rz(alpha) @ Ry(beta) @ Rx(gamma)`` for ``orientation = (alpha, beta, gamma)``."""
    alpha, beta, gamma = np.asarray(orientation, dtype=float).reshape(3)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.array([
        [ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg],
        [sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg],
        [-sb, cb * sg, cb * cg],
    ])


def rotation_derivatives(orientation) -> np.ndarray:
    """Partial derivatives of :func:`rotation_matrix`, stacked as ``(3, 3, 3)``.

    Index 0 is with respect to alpha (yaw), 1 to beta (pitch), 2 to gamma (roll).
    The third row of the alpha derivative is identically zero.
    """
    alpha, beta, gamma = np.asarray(orientation, dtype=float).reshape(3)
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    d_alpha = np.array([
        [-sa * cb, -sa * sb * sg - ca * cg, ca * sg - sa * sb * cg],
        [ca * cb, -cg * sa + ca * sb * sg, cg * ca * sb + sa * sg],
        [0.0, 0.0, 0.0],
    ])
    d_beta = np.array([
        [-ca * sb, ca * cb * sg, ca * cb * cg],
        [-sa * sb, sa * cb * sg, cg * sa * cb],
        [-cb, -sb * sg, -sb * cg],
    ])
    d_gamma = np.array([
        [0.0, ca * sb * cg + sa * sg, sa * cg - ca * sb * sg],
        [0.0, -sg * ca + sa * sb * cg, -(sg * sa * sb + ca * cg)],
        [0.0, cb * cg, -cb * sg],
    ])
    return np.stack([d_alpha, d_beta, d_gamma])


def cartesian_to_spherical(vectors):
    """Return ``(distance, elevation, azimuth)`` arrays for row vectors.

    Elevation is measured from the xy-plane; the azimuth is set to 0 where the
    horizontal component vanishes.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    dist = np.linalg.norm(v, axis=-1)
    horiz = np.hypot(v[..., 0], v[..., 1])
    elev = np.arctan2(v[..., 2], horiz)
    azim = np.where(horiz > _POLE_TOL * np.maximum(dist, 1.0), np.arctan2(v[..., 1], v[..., 0]), 0.0)
    return dist, elev, azim


def spherical_to_cartesian(distance, elevation, azimuth) -> np.ndarray:
    distance, elevation, azimuth = np.broadcast_arrays(distance, elevation, azimuth)
    ce = np.cos(elevation)
    return np.stack([distance * ce * np.cos(azimuth),
                     distance * ce * np.sin(azimuth),
                     distance * np.sin(elevation)], axis=-1)


@dataclass(frozen=True, eq=False)
class ResolvedArray:
    """Absolute element positions of a posed array.

    ``offsets`` are the rotated element positions relative to the centroid; the
    per-antenna (distance, elevation, azimuth) triples are available via :attr:`spherical`.
    """

    pose: StationPose
    layout: ArrayLayout
    offsets: np.ndarray

    @property
    def element_positions(self) -> np.ndarray:
        return self.pose.centroid + self.offsets

    @property
    def spherical(self):
        return cartesian_to_spherical(self.offsets)

    @property
    def element_count(self) -> int:
        return self.offsets.shape[0]


def resolve_array(pose: StationPose, layout: ArrayLayout) -> ResolvedArray:
    offsets = layout.initial_positions @ rotation_matrix(pose.orientation).T
    return ResolvedArray(pose=pose, layout=layout, offsets=offsets)


class Link(NamedTuple):
    """Centroid-to-centroid distance and bearing from station ``a`` to ``b``."""

    distance: float
    elevation: float
    azimuth: float

    @property
    def direction(self) -> np.ndarray:
        return spherical_to_cartesian(1.0, self.elevation, self.azimuth)

    @property
    def is_pole(self) -> bool:
        # azimuth is undefined along the vertical axis; it was pinned to zero
        return abs(np.cos(self.elevation)) < 1e-12


def centroid_link(a, b) -> Link:
    """Distance, elevation and azimuth of ``b`` seen from ``a``.

    ``a`` and ``b`` may be :class:`StationPose` objects or 3-vectors.

    Raises
    ------
    DegenerateGeometryError
        If the two centroids coincide.
    """
    pa = a.centroid if isinstance(a, StationPose) else np.asarray(a, dtype=float)
    pb = b.centroid if isinstance(b, StationPose) else np.asarray(b, dtype=float)
    diff = pb - pa
    dist = float(np.linalg.norm(diff))
    if dist == 0.0 or dist < 1e-15 * max(np.linalg.norm(pa), np.linalg.norm(pb)):
        raise DegenerateGeometryError(f"coincident centroids at {pa.tolist()}")
    horiz = float(np.hypot(diff[0], diff[1]))
    elevation = float(np.arctan2(diff[2], horiz))
    azimuth = float(np.arctan2(diff[1], diff[0])) if horiz > _POLE_TOL * dist else 0.0
    return Link(dist, elevation, azimuth)
