"""Small dense linear-algebra helpers shared across the toolkit.

Everything here is thin sugar over numpy with the truncation and symmetry
conventions used by the dynamics and control code. Pseudo-inverses truncate
singular values below PINV_RCOND * sigma_max; directional matrix derivatives
use a central difference along the velocity with a fixed step.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = [
    "PINV_RCOND",
    "pinv",
    "sym",
    "cross3",
    "directional_derivative",
    "min_eig",
    "psd_project",
]

# NOTE: relative singular-value cutoff shared by every pseudo-inverse in the
# package; tests rely on rank decisions being consistent across modules.
PINV_RCOND = 1e-8

# Central-difference step for d/dt of configuration-dependent matrices.
FD_STEP = 1e-6


def pinv(a: np.ndarray, rcond: float = PINV_RCOND, scale: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with the package-wide truncation.

    ``scale`` widens the truncation yardstick: singular values below
    rcond * max(sigma_max, scale) are treated as zero. Callers pass the
    norm an equivalent non-degenerate matrix would have, so a matrix that
    is pure roundoff noise inverts to zero instead of to noise^-1.
    """
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return np.zeros(a.shape[::-1])
    if scale is None:
        return np.linalg.pinv(a, rcond=rcond)
    if scale <= 1e-10:
        # the reference problem itself is numerically zero
        return np.zeros(a.shape[::-1])
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    cutoff = rcond * max(float(s[0]) if s.size else 0.0, scale)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return (vt.T * inv) @ u.T


def sym(a: np.ndarray) -> np.ndarray:
    """Symmetric part of a square matrix (kills roundoff asymmetry)."""
    return 0.5 * (a + a.T)


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """3-vector cross product without np.cross's axis plumbing, which
    dominates profiles at this size; complex-safe."""
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def directional_derivative(
    fn: Callable[[np.ndarray], np.ndarray],
    q: np.ndarray,
    qd: np.ndarray,
    step: float = FD_STEP,
) -> np.ndarray:
    """Central finite difference of a matrix-valued map along qd.

    Returns d/dt fn(q(t)) at q(t) = q, qdot(t) = qd, i.e. the directional
    derivative of ``fn`` at ``q`` in the direction ``qd``.
    """
    hi = fn(q + step * qd)
    lo = fn(q - step * qd)
    return (hi - lo) / (2.0 * step)


def min_eig(a: np.ndarray) -> float:
    """Smallest eigenvalue of a symmetric matrix (0.0 for empty input)."""
    if a.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(sym(a))[0])


def psd_project(a: np.ndarray) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone by clipping eigenvalues."""
    if a.size == 0:
        return a
    w, v = np.linalg.eigh(sym(a))
    w = np.clip(w, 0.0, None)
    return sym((v * w) @ v.T)
