"""Kinematic car with convexified Reeds-Shepp controls and time dilation.

State is ``(x_w, y_w, theta)``, control is ``(u1, u2)`` with ``u1`` the
normalized longitudinal speed and ``u2`` the normalized steering, both in
``[-1, 1]``. The time-dilated vector field is ``F(x, u, sigma) = sigma * f(x, u)``
where ``f = (cos(theta) u1, sin(theta) u1, kappa_max u2)``.

All functions accept plain arrays and broadcast over leading axes, so a whole
trajectory can be evaluated in one call.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_STATE = 3
N_CONTROL = 2


@dataclass(frozen=True)
class CarState:
    x_w: float
    y_w: float
    theta: float  # unwrapped

    def __post_init__(self):
        if not np.all(np.isfinite([self.x_w, self.y_w, self.theta])):
            raise ValueError(f"non-finite car state {self}")

    def __array__(self, dtype=None, copy=None):
        return np.array([self.x_w, self.y_w, self.theta], dtype=dtype or float)

    @classmethod
    def from_array(cls, a) -> "CarState":
        a = np.asarray(a, dtype=float).reshape(N_STATE)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class CarControl:
    u1: float
    u2: float

    def __post_init__(self):
        if not (abs(self.u1) <= 1.0 + 1e-9 and abs(self.u2) <= 1.0 + 1e-9):
            raise ValueError(f"control outside [-1, 1]^2: {self}")

    def __array__(self, dtype=None, copy=None):
        return np.array([self.u1, self.u2], dtype=dtype or float)

    @classmethod
    def from_array(cls, a) -> "CarControl":
        a = np.asarray(a, dtype=float).reshape(N_CONTROL)
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class ModelParams:
    kappa_max: float = 1.0  # 1/R [1/m]

    def __post_init__(self):
        if not self.kappa_max > 0:
            raise ValueError("kappa_max must be positive")


@dataclass(frozen=True)
class LinearizationPoint:
    sigma_bar: float
    x_bar: CarState
    u_bar: CarControl

    def __post_init__(self):
        if not self.sigma_bar > 0:
            raise ValueError("sigma_bar must be positive")


def dynamics(x, u, sigma, p: ModelParams = ModelParams()) -> np.ndarray:
    """Time-dilated state derivative with respect to normalized time."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)[..., None]
    th = x[..., 2]
    u1 = u[..., 0]
    f = np.stack([np.cos(th) * u1, np.sin(th) * u1, p.kappa_max * u[..., 1]], axis=-1)
    return sigma * f


def jacobians_batch(x_bar, u_bar, sigma_bar, p: ModelParams = ModelParams()):
    """Analytic linearization ``(A, B, S, w)`` of ``dynamics`` at a point.

    ``A = dF/dx``, ``B = dF/du``, ``S = dF/dsigma`` and ``w = -A x_bar - B u_bar``.
    Because ``F`` is linear in ``u`` and in ``sigma`` separately,
    ``A x_bar + B u_bar + S sigma_bar + w`` reproduces ``F`` at the point.
    Leading axes broadcast; the returned shapes are ``(..., 3, 3)``,
    ``(..., 3, 2)``, ``(..., 3)`` and ``(..., 3)``.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    u_bar = np.asarray(u_bar, dtype=float)
    sig = np.asarray(sigma_bar, dtype=float)
    shape = np.broadcast_shapes(x_bar.shape[:-1], u_bar.shape[:-1], sig.shape)
    c = np.cos(x_bar[..., 2])
    s = np.sin(x_bar[..., 2])
    u1 = u_bar[..., 0]

    A = np.zeros(shape + (3, 3))
    A[..., 0, 2] = -sig * s * u1
    A[..., 1, 2] = sig * c * u1

    B = np.zeros(shape + (3, 2))
    B[..., 0, 0] = sig * c
    B[..., 1, 0] = sig * s
    B[..., 2, 1] = sig * p.kappa_max

    S = np.stack(np.broadcast_arrays(c * u1, s * u1, p.kappa_max * u_bar[..., 1]), axis=-1)
    S = np.broadcast_to(S, shape + (3,)).copy()

    w = -np.einsum("...ij,...j->...i", A, np.broadcast_to(x_bar, shape + (3,)))
    w -= np.einsum("...ij,...j->...i", B, np.broadcast_to(u_bar, shape + (2,)))
    return A, B, S, w


def jacobians(z: LinearizationPoint, p: ModelParams = ModelParams()):
    """``(A, B, S, w)`` at a typed linearization point; see ``jacobians_batch``."""
    return jacobians_batch(np.asarray(z.x_bar), np.asarray(z.u_bar), z.sigma_bar, p)
