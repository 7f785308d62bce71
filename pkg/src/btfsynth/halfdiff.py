"""Half/difference parameterization of direction pairs and hemisphere sampling.

A direction pair (wi, wo) over a surface with normal +z is re-expressed as the
half vector h = normalize(wi + wo) in spherical angles (theta_h, phi_h) plus a
difference direction d: the incident direction rotated into the frame of h,

    d = R_y(-theta_h) @ R_z(-phi_h) @ wi

in spherical angles (theta_d, phi_d). Isotropic materials become invariant to
phi_h under this change of variables, which is what makes two small angular
feature planes (one over (theta_h, phi_h), one over (theta_d, phi_d)) a usable
basis for reflectance.

Conventions, fixed throughout the package:
  * directions are float unit 3-vectors, z-up, upper hemisphere (z > 0);
  * theta_h, theta_d in [0, pi/2]; phi_h, phi_d in [0, 2*pi);
  * when theta_h < 1e-7 the half-vector azimuth is indeterminate and phi_h
    is defined to be exactly 0 so downstream plane lookups are reproducible;
  * plane coordinates are (theta / (pi/2), phi / (2*pi)); the phi axis is
    periodic and is addressed with wraparound by the plane fetcher.

All functions broadcast over leading axes; scalars in, scalars out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, DegeneratePairError, OutOfHemisphereError

TWO_PI = 2.0 * np.pi
HALF_PI = 0.5 * np.pi

# Below this theta_h the azimuth of h is numerically meaningless.
_PHI_H_TIEBREAK = 1e-7
_MIN_HALF_NORM = 1e-6


@dataclass(frozen=True)
class DirectionPair:
    """An (incident, outgoing) unit direction pair in the z-up shading frame."""

    wi: np.ndarray
    wo: np.ndarray

    def __post_init__(self):
        wi = np.asarray(self.wi, dtype=np.float64)
        wo = np.asarray(self.wo, dtype=np.float64)
        if wi.shape[-1] != 3 or wo.shape[-1] != 3:
            raise ArgumentError("directions must be 3-vectors")
        for name, w in (("wi", wi), ("wo", wo)):
            norms = np.linalg.norm(w, axis=-1)
            if not np.all(np.abs(norms - 1.0) <= 1e-5):
                raise ArgumentError(f"{name} is not unit length (|{name}| = {norms})")
            if not np.all(w[..., 2] > 0.0):
                raise OutOfHemisphereError(f"{name} has z <= 0")
        object.__setattr__(self, "wi", wi)
        object.__setattr__(self, "wo", wo)


@dataclass(frozen=True)
class HalfDiffCoords:
    """Half/difference angles. Fields broadcast together (scalars or arrays)."""

    theta_h: np.ndarray
    phi_h: np.ndarray
    theta_d: np.ndarray
    phi_d: np.ndarray

    def stack(self) -> np.ndarray:
        """Angles as one array with a trailing axis of 4."""
        return np.stack(
            np.broadcast_arrays(self.theta_h, self.phi_h, self.theta_d, self.phi_d),
            axis=-1,
        )

    @staticmethod
    def from_stack(a: np.ndarray) -> "HalfDiffCoords":
        a = np.asarray(a)
        if a.shape[-1] != 4:
            raise ArgumentError("expected trailing axis of 4 (theta_h, phi_h, theta_d, phi_d)")
        return HalfDiffCoords(a[..., 0], a[..., 1], a[..., 2], a[..., 3])


def _wrap_phi(phi):
    """Map angles to [0, 2*pi). atan2 output (-pi, pi] lands in range after one wrap."""
    out = np.where(phi < 0.0, phi + TWO_PI, phi)
    # A value of exactly 2*pi (possible after the add when phi == -0.0-ish) wraps to 0.
    return np.where(out >= TWO_PI, out - TWO_PI, out)


def to_half_diff(wi, wo) -> HalfDiffCoords:
    """Convert direction pair(s) to half/difference angles.

    Parameters
    ----------
    wi, wo : array_like, shape (..., 3)
        Unit directions with positive z. Broadcast against each other.

    Raises
    ------
    DegeneratePairError
        where |wi + wo| <= 1e-6 (no half vector).
    """
    wi = np.asarray(wi, dtype=np.float64)
    wo = np.asarray(wo, dtype=np.float64)
    if wi.shape[-1] != 3 or wo.shape[-1] != 3:
        raise ArgumentError("directions must have a trailing axis of 3")
    wi, wo = np.broadcast_arrays(wi, wo)

    s = wi + wo
    norm = np.linalg.norm(s, axis=-1)
    bad = norm <= _MIN_HALF_NORM
    if np.any(bad):
        raise DegeneratePairError(
            "wi + wo vanishes; half vector undefined", indices=np.nonzero(bad)
        )
    h = s / norm[..., None]

    cos_th = np.clip(h[..., 2], -1.0, 1.0)
    theta_h = np.arccos(cos_th)
    phi_h = _wrap_phi(np.arctan2(h[..., 1], h[..., 0]))
    # Azimuth of a vertical half vector is arbitrary; pin it so lookups reproduce.
    tie = theta_h < _PHI_H_TIEBREAK
    phi_h = np.where(tie, 0.0, phi_h)

    # d = R_y(-theta_h) @ R_z(-phi_h) @ wi, written out to stay vectorized.
    cp, sp = np.cos(phi_h), np.sin(phi_h)
    x1 = cp * wi[..., 0] + sp * wi[..., 1]
    y1 = -sp * wi[..., 0] + cp * wi[..., 1]
    z1 = wi[..., 2]
    ct, st = np.cos(theta_h), np.sin(theta_h)
    x2 = ct * x1 - st * z1
    z2 = st * x1 + ct * z1

    theta_d = np.arccos(np.clip(z2, -1.0, 1.0))
    phi_d = _wrap_phi(np.arctan2(y1, x2))

    if wi.ndim == 1:
        return HalfDiffCoords(
            float(theta_h), float(phi_h), float(theta_d), float(phi_d)
        )
    return HalfDiffCoords(theta_h, phi_h, theta_d, phi_d)


def from_half_diff(hd: HalfDiffCoords):
    """Invert the parameterization back to (wi, wo).

    Returns
    -------
    (wi, wo) : arrays of shape (..., 3)

    Raises
    ------
    OutOfHemisphereError
        if either recovered direction has z <= 0; valid half/diff angles can
        still describe pairs that dip below the horizon.
    """
    th = np.asarray(hd.theta_h, dtype=np.float64)
    ph = np.asarray(hd.phi_h, dtype=np.float64)
    td = np.asarray(hd.theta_d, dtype=np.float64)
    pd = np.asarray(hd.phi_d, dtype=np.float64)
    th, ph, td, pd = np.broadcast_arrays(th, ph, td, pd)
    scalar = th.ndim == 0
    if scalar:
        th, ph, td, pd = (a[None] for a in (th, ph, td, pd))

    st, ct = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    h = np.stack([st * cp, st * sp, ct], axis=-1)

    sd, cd = np.sin(td), np.cos(td)
    d = np.stack([sd * np.cos(pd), sd * np.sin(pd), cd], axis=-1)

    # wi = R_z(phi_h) @ R_y(theta_h) @ d
    x1 = ct * d[..., 0] + st * d[..., 2]
    y1 = d[..., 1]
    z1 = -st * d[..., 0] + ct * d[..., 2]
    wi = np.stack([cp * x1 - sp * y1, sp * x1 + cp * y1, z1], axis=-1)

    # Reflect wi about h to recover wo.
    wo = 2.0 * np.sum(wi * h, axis=-1, keepdims=True) * h - wi

    bad_i = wi[..., 2] <= 0.0
    bad_o = wo[..., 2] <= 0.0
    if np.any(bad_i | bad_o):
        raise OutOfHemisphereError(
            "recovered direction left the upper hemisphere",
            indices=np.nonzero(bad_i | bad_o),
        )
    if scalar:
        return wi[0], wo[0]
    return wi, wo


def halfdiff_to_plane_uv(hd: HalfDiffCoords):
    """Map angles to the two angular feature-plane coordinates.

    Returns (uv_h, uv_d), each with trailing axis (theta / (pi/2), phi / (2*pi)).
    The theta component is 0..1 edge-clamped by the plane fetcher; the phi
    component is periodic and wraps.
    """
    th = np.asarray(hd.theta_h, dtype=np.float64)
    ph = np.asarray(hd.phi_h, dtype=np.float64)
    td = np.asarray(hd.theta_d, dtype=np.float64)
    pd = np.asarray(hd.phi_d, dtype=np.float64)
    uv_h = np.stack(np.broadcast_arrays(th / HALF_PI, ph / TWO_PI), axis=-1)
    uv_d = np.stack(np.broadcast_arrays(td / HALF_PI, pd / TWO_PI), axis=-1)
    return uv_h, uv_d


def cosine_sample_hemisphere(u1, u2):
    """Map unit-square samples to cosine-weighted hemisphere directions.

    Returns (direction, pdf) where pdf = z / pi. Accepts scalars or arrays.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if np.any(u1 < 0.0) or np.any(u1 > 1.0) or np.any(u2 < 0.0) or np.any(u2 > 1.0):
        raise ArgumentError("samples must lie in [0, 1]^2")
    r = np.sqrt(u1)
    phi = TWO_PI * u2
    z = np.sqrt(np.maximum(0.0, 1.0 - u1))
    d = np.stack(np.broadcast_arrays(r * np.cos(phi), r * np.sin(phi), z), axis=-1)
    return d, z / np.pi
