"""Runtime BTF evaluation: (u*, wi, wo) -> linear RGB reflectance.

The evaluator binds a trained model to a synthesis mode. A query runs

    positional features  f_u(u*)        (mode-dependent extension)
    angular features     f_h, f_d       (half/difference plane fetches)
    concat -> decoder MLP -> clamp negatives to zero

Negative intermediate values are allowed everywhere; the clamp happens only
at this query boundary, so training-time reconstruction (reconstruct_batch,
no clamp) and REPEAT-mode queries agree bitwise up to that final max(., 0).

Purity: results are bitwise identical for a given (model, params, query)
regardless of batch size, query order, chunking or thread count. Everything
on the query path is either elementwise or a fixed-length reduction
(the decoder runs through the row-stable reference kernel, never BLAS).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError, OutOfHemisphereError
from .halfdiff import halfdiff_to_plane_uv, to_half_diff
from .neural_core import TriplePlaneModel, mlp_forward, plane_fetch
from .synthesis import (
    GaussianizedExemplar,
    SynthesisMode,
    SynthesisParams,
    build_gaussianization,
    make_tileable,
    synthesize_features,
)

# Queries are processed in slices of this many rows to bound temp memory.
# Row results never depend on slice boundaries.
_QUERY_CHUNK = 65536


@dataclass(frozen=True)
class BtfQuery:
    """One evaluation request: spatial position (any real uv) + direction pair."""

    u_star: np.ndarray
    wi: np.ndarray
    wo: np.ndarray


def default_tileable_border(plane) -> int:
    return min(plane.width, plane.height) // 16


class BtfEvaluator:
    """Bound (model, synthesis params) with cached Gaussianization tables."""

    def __init__(
        self,
        model: TriplePlaneModel,
        params: SynthesisParams = None,
        gauss: GaussianizedExemplar = None,
    ):
        self.model = model
        self.params = params if params is not None else SynthesisParams()
        mode = self.params.mode
        if mode == SynthesisMode.QUILTED and self.params.quilted_plane is None:
            raise ConfigError("QUILTED mode needs params.quilted_plane")
        self.gauss = gauss
        if mode in (SynthesisMode.HIST_BLEND, SynthesisMode.HEX_TILE) and gauss is None:
            border = self.params.tileable_border
            if border is None:
                border = default_tileable_border(model.plane_u)
            plane = (
                make_tileable(model.plane_u, border) if border > 0 else model.plane_u
            )
            self.gauss = build_gaussianization(plane, self.params.lut_size)

    # -- single query ------------------------------------------------------

    def query(self, q: BtfQuery) -> np.ndarray:
        """Evaluate one query; returns linear RGB (3,), never negative."""
        out = self.query_batch(
            np.asarray(q.u_star, dtype=np.float64)[None, :],
            np.asarray(q.wi, dtype=np.float64)[None, :],
            np.asarray(q.wo, dtype=np.float64)[None, :],
        )
        return out[0]

    # -- batched queries ----------------------------------------------------

    def query_batch(self, u_star, wi, wo) -> np.ndarray:
        """Evaluate many queries. u_star (B, 2); wi, wo (B, 3) unit, z > 0.

        Invalid directions raise with the offending element indices attached;
        no partial results are returned.
        """
        u_star = np.asarray(u_star, dtype=np.float64)
        wi = np.asarray(wi, dtype=np.float64)
        wo = np.asarray(wo, dtype=np.float64)
        if u_star.ndim != 2 or u_star.shape[1] != 2:
            raise ArgumentError("u_star must be (B, 2)")
        b = u_star.shape[0]
        if wi.shape != (b, 3) or wo.shape != (b, 3):
            raise ArgumentError("wi and wo must be (B, 3) matching u_star")
        if not np.all(np.isfinite(u_star)):
            raise ArgumentError("u_star must be finite")
        self._validate_directions(wi, wo)

        out = np.empty((b, 3), dtype=np.float32)
        for start in range(0, b, _QUERY_CHUNK):
            sl = slice(start, min(start + _QUERY_CHUNK, b))
            out[sl] = self._eval_chunk(u_star[sl], wi[sl], wo[sl])
        return out

    @staticmethod
    def _validate_directions(wi, wo):
        for name, w in (("wi", wi), ("wo", wo)):
            norms = np.linalg.norm(w, axis=1)
            bad = ~np.isfinite(norms) | (np.abs(norms - 1.0) > 1e-6)
            if np.any(bad):
                raise ArgumentError(
                    f"{name} rows not unit length at indices {np.nonzero(bad)[0][:16]}"
                )
            below = w[:, 2] <= 0.0
            if np.any(below):
                raise OutOfHemisphereError(
                    f"{name} rows below the hemisphere", indices=np.nonzero(below)[0]
                )

    def _eval_chunk(self, u_star, wi, wo) -> np.ndarray:
        hd = to_half_diff(wi, wo)
        uv_h, uv_d = halfdiff_to_plane_uv(hd)
        f_pos = self._positional_features(u_star)
        f_h = plane_fetch(self.model.plane_h, uv_h).astype(np.float32)
        f_d = plane_fetch(self.model.plane_d, uv_d).astype(np.float32)
        x = np.concatenate([f_pos, f_h, f_d], axis=1)
        y = mlp_forward(self.model.mlp, x).astype(np.float32, copy=False)
        return np.maximum(y, np.float32(0.0))

    def _positional_features(self, u_star) -> np.ndarray:
        mode = self.params.mode
        if mode == SynthesisMode.REPEAT:
            # WRAP addressing makes the fetch periodic: effectively fract(u*).
            return plane_fetch(self.model.plane_u, u_star).astype(np.float32)
        if mode == SynthesisMode.QUILTED:
            return plane_fetch(
                self.params.quilted_plane, u_star / self.params.quilted_scale
            ).astype(np.float32)
        return synthesize_features(self.gauss, self.params, u_star).astype(np.float32)


def reconstruct_batch(model: TriplePlaneModel, uv, hd) -> np.ndarray:
    """Training-time reconstruction at explicit (uv, half/diff) coordinates.

    The reference forward without the query-boundary clamp: REPEAT-mode
    query_batch equals max(reconstruct_batch, 0) bitwise for uv in [0, 1)^2.
    """
    uv = np.asarray(uv, dtype=np.float64)
    uv_h, uv_d = halfdiff_to_plane_uv(hd)
    f_u = plane_fetch(model.plane_u, uv).astype(np.float32)
    f_h = plane_fetch(model.plane_h, uv_h).astype(np.float32)
    f_d = plane_fetch(model.plane_d, uv_d).astype(np.float32)
    x = np.concatenate([f_u, f_h, f_d], axis=1)
    return mlp_forward(model.mlp, x).astype(np.float32, copy=False)
