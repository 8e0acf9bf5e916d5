"""Local flat-earth displacement arithmetic between lon/lat reports.

All positions are radians, longitude in (-pi, pi] and latitude strictly
inside the poles. Displacements are kilometres, east- and north-positive,
computed with mid-latitude scaling: a step from a to b is

    dx = r * (lon_b - lon_a) * cos((lat_a + lat_b) / 2)
    dy = r * (lat_b - lat_a)

with the longitude difference taken through the shorter arc. This is the
local tangent-plane approximation appropriate for multi-hour ship steps,
not geodesic arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidCoordinateError, OutOfDomainError

TWO_PI = 2.0 * math.pi

# Reporting conversion at the equator; longitude values scale by cos(lat).
KM_PER_DEGREE = 111.19


def wrap_longitude(lon: float) -> float:
    """Wrap a longitude in radians into (-pi, pi]."""
    if -math.pi < lon <= math.pi:
        return lon
    w = math.fmod(lon + math.pi, TWO_PI)
    if w <= 0.0:
        w += TWO_PI
    return w - math.pi


def wrap_angle(x: float) -> float:
    """Wrap any angle into (-pi, pi] (shorter-arc difference)."""
    return wrap_longitude(x)


@dataclass(frozen=True)
class EarthModel:
    """Spherical earth of mean radius ``radius_km``."""

    radius_km: float = 6371.0

    def __post_init__(self):
        if not (self.radius_km > 0.0):
            raise InvalidCoordinateError("earth radius must be positive")


@dataclass(frozen=True)
class GeoPoint:
    """Position in radians; lon in (-pi, pi], lat in (-pi/2, pi/2)."""

    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise InvalidCoordinateError(f"non-finite coordinates ({self.lon}, {self.lat})")
        if not (-math.pi / 2.0 < self.lat < math.pi / 2.0):
            raise InvalidCoordinateError(f"latitude {self.lat} rad outside (-pi/2, pi/2)")
        object.__setattr__(self, "lon", wrap_longitude(self.lon))

    @classmethod
    def from_degrees(cls, lon_deg: float, lat_deg: float) -> "GeoPoint":
        return cls(math.radians(lon_deg), math.radians(lat_deg))

    @property
    def lon_deg(self) -> float:
        return math.degrees(self.lon)

    @property
    def lat_deg(self) -> float:
        return math.degrees(self.lat)


@dataclass(frozen=True)
class Displacement:
    """Local displacement in km, east-positive dx and north-positive dy."""

    dx: float
    dy: float

    def __post_init__(self):
        if not (math.isfinite(self.dx) and math.isfinite(self.dy)):
            raise InvalidCoordinateError(f"non-finite displacement ({self.dx}, {self.dy})")

    def norm(self) -> float:
        return math.hypot(self.dx, self.dy)


DEFAULT_EARTH = EarthModel()


def step_displacement(a: GeoPoint, b: GeoPoint, earth: EarthModel = DEFAULT_EARTH) -> Displacement:
    """Mid-latitude displacement of one step from a to b.

    Args:
        a: Start position.
        b: End position.
        earth: Earth model supplying the radius.

    Returns:
        Displacement in km; the longitude difference is wrapped through
        the shorter arc, so antimeridian-crossing steps stay small.
    """
    dlon = wrap_longitude(b.lon - a.lon)
    midlat = 0.5 * (a.lat + b.lat)
    return Displacement(
        earth.radius_km * dlon * math.cos(midlat),
        earth.radius_km * (b.lat - a.lat),
    )


def cumulative_displacements(points, earth: EarthModel = DEFAULT_EARTH) -> list[Displacement]:
    """Running displacement of each point from the first one.

    Element t is the accumulated sum of the per-step displacements over
    steps 1..t; element 0 is (0, 0). Accumulating steps rather than
    differencing endpoints keeps the result consistent with the per-step
    mid-latitude scaling.

    Args:
        points: Sequence of GeoPoint, length >= 1.
        earth: Earth model.

    Returns:
        List of Displacement, same length as ``points``.
    """
    pts = list(points)
    if not pts:
        raise EmptyInputError("cumulative_displacements needs at least one point")
    out = [Displacement(0.0, 0.0)]
    x = y = 0.0
    for prev, cur in zip(pts[:-1], pts[1:]):
        d = step_displacement(prev, cur, earth)
        x += d.dx
        y += d.dy
        out.append(Displacement(x, y))
    return out


def advance(p: GeoPoint, d: Displacement, earth: EarthModel = DEFAULT_EARTH) -> GeoPoint:
    """Inverse of step_displacement: the point reached from p by d.

    dy fixes the target latitude and therefore the mid-latitude cosine,
    so the inversion is direct; the round-trip through step_displacement
    reproduces d to ~1e-12 km.

    Args:
        p: Start position.
        d: Displacement in km.
        earth: Earth model.

    Returns:
        End position as a GeoPoint.
    """
    lat_b = p.lat + d.dy / earth.radius_km
    if not (-math.pi / 2.0 < lat_b < math.pi / 2.0):
        raise OutOfDomainError(f"advance crosses a pole (lat {lat_b} rad)")
    c = math.cos(0.5 * (p.lat + lat_b))
    dlon = d.dx / (earth.radius_km * c)
    if not (-math.pi < dlon <= math.pi):
        raise OutOfDomainError(f"longitude increment {dlon} rad outside the principal arc")
    return GeoPoint(wrap_longitude(p.lon + dlon), lat_b)


# Array variants used by the simulation and propagation hot paths. Inputs
# and outputs are plain float64 ndarrays in radians / km.


def step_displacements_xy(lon: np.ndarray, lat: np.ndarray, earth: EarthModel = DEFAULT_EARTH):
    """Per-step (dx, dy) arrays for a polyline of positions."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    if lon.shape != lat.shape or lon.ndim != 1:
        raise InvalidCoordinateError("lon and lat must be 1-d arrays of equal length")
    if not (np.all(np.isfinite(lon)) and np.all(np.isfinite(lat))):
        raise InvalidCoordinateError("non-finite coordinates in array input")
    dlon = np.diff(lon)
    dlon -= TWO_PI * np.floor((dlon + math.pi) / TWO_PI)
    # floor-based wrap maps the boundary to -pi; nudge onto (-pi, pi]
    dlon[dlon == -math.pi] = math.pi
    midlat = 0.5 * (lat[:-1] + lat[1:])
    dx = earth.radius_km * dlon * np.cos(midlat)
    dy = earth.radius_km * np.diff(lat)
    return dx, dy


def pair_displacements_xy(lon_a, lat_a, lon_b, lat_b, earth: EarthModel = DEFAULT_EARTH):
    """Elementwise (dx, dy) from points a to points b; arrays broadcast."""
    lon_a = np.asarray(lon_a, dtype=np.float64)
    lat_a = np.asarray(lat_a, dtype=np.float64)
    lon_b = np.asarray(lon_b, dtype=np.float64)
    lat_b = np.asarray(lat_b, dtype=np.float64)
    dlon = lon_b - lon_a
    dlon = dlon - TWO_PI * np.floor((dlon + math.pi) / TWO_PI)
    dlon = np.where(dlon == -math.pi, math.pi, dlon)
    midlat = 0.5 * (lat_a + lat_b)
    return earth.radius_km * dlon * np.cos(midlat), earth.radius_km * (lat_b - lat_a)


def cumulative_xy(lon: np.ndarray, lat: np.ndarray, earth: EarthModel = DEFAULT_EARTH):
    """Cumulative (x, y) displacement arrays from the first position."""
    dx, dy = step_displacements_xy(lon, lat, earth)
    n = len(np.asarray(lon))
    qx = np.zeros(n)
    qy = np.zeros(n)
    np.cumsum(dx, out=qx[1:])
    np.cumsum(dy, out=qy[1:])
    return qx, qy


def advance_xy(lon: np.ndarray, lat: np.ndarray, dx: np.ndarray, dy: np.ndarray,
               earth: EarthModel = DEFAULT_EARTH):
    """Vectorized advance; arrays broadcast together."""
    lon = np.asarray(lon, dtype=np.float64)
    lat = np.asarray(lat, dtype=np.float64)
    lat_b = lat + np.asarray(dy, dtype=np.float64) / earth.radius_km
    if np.any(np.abs(lat_b) >= math.pi / 2.0):
        raise OutOfDomainError("advance crosses a pole")
    c = np.cos(0.5 * (lat + lat_b))
    dlon = np.asarray(dx, dtype=np.float64) / (earth.radius_km * c)
    if np.any(np.abs(dlon) > math.pi):
        raise OutOfDomainError("longitude increment outside the principal arc")
    lon_b = lon + dlon
    out = lon_b - TWO_PI * np.floor((lon_b + math.pi) / TWO_PI)
    out = np.where(out == -math.pi, math.pi, out)
    return out, lat_b
