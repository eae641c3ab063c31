"""Orthonormal frame fields attached to manifold states.

EuCov is the ambient coordinate frame (identity at every state). The
geometric fields put the manifold tangent directions first: curves get the
normalized tangent followed by Gram-Schmidt completion over the standard
basis vectors in index order, and the torus gets its two normalized
tangents plus their cross product. A frame enters the model only through
K (.) K', so column signs are free; they are fixed deterministically (each
completed column's first nonzero entry is made positive).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

import numpy as np

from .errors import DegenerateFrame, DegenerateTangent

_SKIP_TOL = 1e-8
_SIGN_TOL = 1e-9


def _fix_sign_rows(u):
    # flip rows so the first entry larger than _SIGN_TOL is positive
    lead = np.argmax(np.abs(u) > _SIGN_TOL, axis=1)
    flip = u[np.arange(len(u)), lead] < 0
    u[flip] *= -1.0
    return u


def _gs_frame_single(tangent):
    n = tangent.shape[0]
    nrm = np.linalg.norm(tangent)
    if nrm < 1e-12:
        raise DegenerateTangent("zero tangent vector")
    cols = [tangent / nrm]
    for e_idx in range(n):
        if len(cols) == n:
            break
        v = -sum(c[e_idx] * c for c in cols)
        v[e_idx] += 1.0
        vn = np.linalg.norm(v)
        if vn < _SKIP_TOL:
            continue
        u = v / vn
        lead = int(np.argmax(np.abs(u) > _SIGN_TOL))
        if u[lead] < 0:
            u = -u
        cols.append(u)
    if len(cols) < n:
        raise DegenerateFrame("could not complete an orthonormal frame")
    return np.stack(cols, axis=1)


def _tangent_frames(tangents):
    """Batched curve frames: normalized tangent plus Gram-Schmidt completion.

    The vectorized pass assumes no basis vector is skipped (the generic
    case); rows where a residual collapses are redone one by one.
    """
    tangents = np.atleast_2d(np.asarray(tangents, dtype=float))
    B, n = tangents.shape
    norms = np.linalg.norm(tangents, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateTangent("zero tangent vector")
    K = np.zeros((B, n, n))
    K[:, :, 0] = tangents / norms[:, None]
    irregular = np.zeros(B, dtype=bool)
    for col, e_idx in enumerate(range(n - 1), start=1):
        cols = K[:, :, :col]
        coef = cols[:, e_idx, :]
        v = -np.einsum("bic,bc->bi", cols, coef)
        v[:, e_idx] += 1.0
        nrm = np.linalg.norm(v, axis=1)
        irregular |= nrm < _SKIP_TOL
        u = v / np.maximum(nrm, 1e-300)[:, None]
        K[:, :, col] = _fix_sign_rows(u)
    for b in np.nonzero(irregular)[0]:
        K[b] = _gs_frame_single(tangents[b])
    return K


@dataclass(frozen=True)
class EuCov:
    """Identity frame at every state: deviations live in ambient axes."""

    n: int
    is_identity: ClassVar[bool] = True

    def frame(self, z):
        return np.eye(self.n)

    def frames(self, zs):
        M = np.atleast_1d(np.asarray(zs)).shape[0]
        return np.tile(np.eye(self.n), (M, 1, 1))


@dataclass(frozen=True)
class GeCovCurve:
    """Curve frame: normalized tangent first, basis completion after."""

    manifold: object
    is_identity: ClassVar[bool] = False

    @property
    def n(self):
        return self.manifold.ambient_dim

    def frames(self, zs):
        return _tangent_frames(self.manifold.tangent(zs))

    def frame(self, z):
        return self.frames(np.atleast_1d(np.asarray(z, dtype=float)))[0]


@dataclass(frozen=True)
class GeCovTorus:
    """Torus frame: the two normalized tangents and their cross product."""

    manifold: object
    is_identity: ClassVar[bool] = False

    @property
    def n(self):
        return self.manifold.ambient_dim

    def frames(self, zs):
        zs = np.atleast_2d(np.asarray(zs, dtype=float))
        t = self.manifold.tangent(zs)
        t1 = t[:, 0] / np.linalg.norm(t[:, 0], axis=1)[:, None]
        t2 = t[:, 1] / np.linalg.norm(t[:, 1], axis=1)[:, None]
        K = np.stack([t1, t2, np.cross(t1, t2)], axis=-1)
        gram = np.einsum("bij,bik->bjk", K, K)
        if np.max(np.abs(gram - np.eye(3))) > 1e-8:
            raise DegenerateFrame("torus tangents are not orthogonal here")
        return K

    def frame(self, z):
        return self.frames(np.asarray(z, dtype=float).reshape(1, 2))[0]


def gecov_for(manifold):
    """Geometric frame field matching the manifold's latent dimension."""
    if manifold.latent_dim == 1:
        return GeCovCurve(manifold)
    if manifold.latent_dim == 2:
        return GeCovTorus(manifold)
    raise ValueError("no geometric frame rule for this manifold")
