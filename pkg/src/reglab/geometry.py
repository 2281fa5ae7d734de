"""Exact rigid-motion core: transforms, inlier counting, weighted fits.

Angles are reported in degrees, translation errors in centimeters,
coordinates in meters. Rotations are proper (det +1) and validated on
construction to 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ContractError, DegenerateInputError, ShapeError

F64 = np.float64
Points = NDArray[F64]  # (N, 3)

SCENES = ("indoor", "outdoor")

# Success gates per scene kind: (max rotation error deg, max translation error cm).
SUCCESS_GATES = {"indoor": (15.0, 30.0), "outdoor": (5.0, 60.0)}

# Inlier distance thresholds (meters) matched to scene scale.
DEFAULT_DELTA = {"indoor": 0.10, "outdoor": 0.60}

_ROT_TOL = 1e-9


def check_scene(scene: str) -> str:
    if scene not in SCENES:
        raise ContractError(f"unknown scene kind {scene!r}, expected one of {SCENES}")
    return scene


def as_points(x, name: str = "points") -> Points:
    p = np.asarray(x, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ShapeError(f"{name}: expected (N, 3), got {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ContractError(f"{name}: contains non-finite entries")
    return p


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion x -> R x + t.

    Construction validates orthonormality (max |R^T R - I| < 1e-9) and
    det(R) = +1 within 1e-9, and freezes the arrays read-only.
    """

    rotation: NDArray[F64]
    translation: NDArray[F64]

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ContractError("RigidTransform: non-finite entries")
        ortho = np.abs(r.T @ r - np.eye(3)).max()
        if ortho >= _ROT_TOL:
            raise ContractError(
                f"RigidTransform: rotation not orthonormal, max |R^T R - I| = {ortho:.3e}"
            )
        det = np.linalg.det(r)
        if abs(det - 1.0) >= _ROT_TOL:
            raise ContractError(f"RigidTransform: det(R) = {det!r}, expected +1")
        r = r.copy()
        t = t.copy()
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: Points) -> Points:
        return apply_transform(self, points)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self after inner: (self.compose(inner)).apply(x) == self.apply(inner.apply(x))."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )


@dataclass(frozen=True)
class CorrespondenceSet:
    """Putative point pairs (source[i] <-> target[i]) with optional labels.

    ``labels[i]`` is True when pair i is a true inlier; None when unknown.
    """

    source: Points
    target: Points
    labels: NDArray[np.bool_] | None = None

    def __post_init__(self):
        s = as_points(self.source, "source")
        t = as_points(self.target, "target")
        if s.shape != t.shape:
            raise ShapeError(
                f"CorrespondenceSet: source {s.shape} vs target {t.shape}"
            )
        lab = self.labels
        if lab is not None:
            lab = np.asarray(lab, dtype=bool).reshape(-1)
            if lab.shape[0] != s.shape[0]:
                raise ShapeError(
                    f"CorrespondenceSet: {lab.shape[0]} labels for {s.shape[0]} pairs"
                )
            lab.flags.writeable = False
        s, t = s.copy(), t.copy()
        s.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", t)
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.source.shape[0]


def apply_transform(transform: RigidTransform, points: Points) -> Points:
    points = as_points(points)
    return points @ transform.rotation.T + transform.translation


def residuals(transform: RigidTransform, c: CorrespondenceSet) -> NDArray[F64]:
    """Euclidean residual per correspondence under the transform."""
    diff = apply_transform(transform, c.source) - c.target
    return np.sqrt((diff * diff).sum(axis=1))


def count_inliers(transform: RigidTransform, c: CorrespondenceSet, delta: float) -> int:
    """Number of pairs with ||R p_s + t - p_t|| strictly below delta."""
    if delta <= 0.0:
        raise ContractError(f"count_inliers: delta must be positive, got {delta}")
    diff = apply_transform(transform, c.source) - c.target
    return int(((diff * diff).sum(axis=1) < delta * delta).sum())


def inlier_mask(transform: RigidTransform, c: CorrespondenceSet, delta: float) -> NDArray[np.bool_]:
    diff = apply_transform(transform, c.source) - c.target
    return (diff * diff).sum(axis=1) < delta * delta


def weighted_kabsch(c: CorrespondenceSet, weights) -> RigidTransform:
    """Weighted least-squares rigid fit via SVD of the weighted covariance.

    Weights must be non-negative with a positive sum; at least three
    pairs need positive weight and the weighted source spread must not be
    collinear or coincident. The smallest singular direction is flipped
    when needed so the rotation is always proper. Scaling all weights by
    a positive constant does not change the result.
    """
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    n = len(c)
    if weights.shape[0] != n:
        raise ShapeError(f"weighted_kabsch: {weights.shape[0]} weights for {n} pairs")
    if np.any(weights < 0.0):
        raise ContractError("weighted_kabsch: negative weights")
    total = weights.sum()
    if not (total > 0.0):
        raise ContractError("weighted_kabsch: all weights are zero")
    if int((weights > 0.0).sum()) < 3:
        raise DegenerateInputError(
            "weighted_kabsch: fewer than 3 pairs with positive weight"
        )
    w = weights / total
    src, tgt = c.source, c.target
    mu_s = w @ src
    mu_t = w @ tgt
    a = src - mu_s
    b = tgt - mu_t
    h = (a * w[:, None]).T @ b
    u, s, vt = np.linalg.svd(h)
    if s[0] <= 0.0 or s[1] <= 1e-9 * s[0]:
        raise DegenerateInputError(
            "weighted_kabsch: weighted covariance is rank-deficient "
            "(collinear or coincident support)"
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    if d == 0.0:
        raise DegenerateInputError("weighted_kabsch: singular alignment")
    flip = np.array([1.0, 1.0, d])
    rotation = (vt.T * flip) @ u.T
    translation = mu_t - rotation @ mu_s
    return RigidTransform(rotation, translation)


@dataclass(frozen=True)
class SelectionResult:
    index: int
    transform: RigidTransform
    inlier_count: int


def select_best_transform(
    candidates: list[RigidTransform] | tuple[RigidTransform, ...],
    c: CorrespondenceSet,
    delta: float,
) -> SelectionResult:
    """Pick the candidate with the most strict inliers at delta.

    Ties break to the lowest mean inlier residual, then to the lowest
    candidate index; a candidate with zero inliers has mean residual
    +inf for tie-breaking purposes.
    """
    if len(candidates) == 0:
        raise DegenerateInputError("select_best_transform: empty candidate list")
    best: tuple[int, float, int] | None = None  # (-count, mean_res, index) minimized
    for i, cand in enumerate(candidates):
        res = residuals(cand, c)
        hits = res < delta
        count = int(hits.sum())
        mean_res = float(res[hits].mean()) if count > 0 else np.inf
        key = (-count, mean_res, i)
        if best is None or key < best:
            best = key
    idx = best[2]
    return SelectionResult(idx, candidates[idx], -best[0])


def rotation_error(r_gt: RigidTransform | NDArray[F64], r_est: RigidTransform | NDArray[F64]) -> float:
    """Geodesic rotation distance in degrees: arccos((trace(R_gt^T R_est) - 1)/2).

    Identical inputs return exactly 0. Near the identity the trace form
    quantizes the angle at ~1e-6 degrees (arccos has unbounded slope at 1),
    so angles below ~8e-3 degrees are evaluated through the displacement
    norm instead: theta = 2 asin(||R_gt^T R_est - I||_F / (2 sqrt(2))),
    the same geodesic angle with bounded rounding error.
    """
    a = r_gt.rotation if isinstance(r_gt, RigidTransform) else np.asarray(r_gt, dtype=np.float64)
    b = r_est.rotation if isinstance(r_est, RigidTransform) else np.asarray(r_est, dtype=np.float64)
    if np.array_equal(a, b):
        return 0.0
    m = a.T @ b
    cos = (np.trace(m) - 1.0) / 2.0
    if cos < 1.0 - 1e-8:
        return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
    half_chord = np.linalg.norm(m - np.eye(3)) / (2.0 * np.sqrt(2.0))
    return float(np.degrees(2.0 * np.arcsin(min(half_chord, 1.0))))


def translation_error(t_gt, t_est) -> float:
    """Euclidean translation gap in centimeters."""
    a = t_gt.translation if isinstance(t_gt, RigidTransform) else np.asarray(t_gt, dtype=np.float64)
    b = t_est.translation if isinstance(t_est, RigidTransform) else np.asarray(t_est, dtype=np.float64)
    return float(np.linalg.norm(b.reshape(3) - a.reshape(3)) * 100.0)


def registration_success(re_deg: float, te_cm: float, scene: str) -> bool:
    """Strict success gate: both errors below the scene's thresholds."""
    max_re, max_te = SUCCESS_GATES[check_scene(scene)]
    return bool(re_deg < max_re and te_cm < max_te)
