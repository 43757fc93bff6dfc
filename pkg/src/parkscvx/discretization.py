"""First-order-hold discretization and affine variable scaling.

The linearized, time-dilated dynamics are integrated on every interval
``[tau_k, tau_k+1]`` jointly with the reference state, the fundamental matrix
``Phi``, its inverse and the input/defect integrals, which yields

    x[k+1] = A_k x[k] + Bm_k u[k] + Bp_k u[k+1] + S_k sigma + w_k

Controls are linearly interpolated between knots. Intervals are integrated as
one batch with fixed-step RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .vehicle_model import ModelParams, dynamics, jacobians_batch

DEFAULT_SUBSTEPS = 16


def foh_coefficients(tau, tau_k, tau_k1):
    """Interpolation weights ``(lam_minus, lam_plus)``; they sum to one."""
    if not tau_k1 > tau_k:
        raise ValueError(f"degenerate FOH interval [{tau_k}, {tau_k1}]")
    h = tau_k1 - tau_k
    return (tau_k1 - tau) / h, (tau - tau_k) / h


@dataclass
class SubsampleMaps:
    """Affine maps from interval data to states at interior sample points.

    ``x(tau_j) = Ax[j] x_k + Bm[j] u_k + Bp[j] u_k+1 + S[j] sigma + w[j]``
    for the fractions ``frac`` of each interval. Arrays are indexed
    ``[interval, sample, ...]``; ``x_ref`` holds the reference state there.
    """

    frac: np.ndarray
    Ax: np.ndarray
    Bm: np.ndarray
    Bp: np.ndarray
    S: np.ndarray
    w: np.ndarray
    x_ref: Optional[np.ndarray] = None


@dataclass
class LtvSystem:
    A: np.ndarray  # (K-1, 3, 3)
    B_minus: np.ndarray  # (K-1, 3, 2)
    B_plus: np.ndarray
    S: np.ndarray  # (K-1, 3)
    w: np.ndarray
    # reference state propagated through each interval by the nonlinear flow
    x_prop: Optional[np.ndarray] = None
    sub: Optional[SubsampleMaps] = None

    def __post_init__(self):
        if self.A.shape[0] < 1:
            raise ValueError("an LTV system needs K >= 2")
        for name in ("A", "B_minus", "B_plus", "S", "w"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise FloatingPointError(f"non-finite {name} in LTV system")

    @property
    def K(self) -> int:
        return self.A.shape[0] + 1

    def step(self, k: int, x_k, u_k, u_k1, sigma, nu=None) -> np.ndarray:
        out = self.A[k] @ x_k + self.B_minus[k] @ u_k + self.B_plus[k] @ u_k1
        out = out + self.S[k] * sigma + self.w[k]
        return out if nu is None else out + nu

    def propagate(self, x0, controls, sigma) -> np.ndarray:
        """Roll the discrete dynamics forward from ``x0`` without virtual control."""
        xs = [np.asarray(x0, dtype=float)]
        for k in range(self.K - 1):
            xs.append(self.step(k, xs[-1], controls[k], controls[k + 1], sigma))
        return np.array(xs)


# vector field hook: (x, u, sigma) -> (F, A, B, S, w), batched on axis 0
Field = Callable[[np.ndarray, np.ndarray, np.ndarray], tuple]


def car_field(p: ModelParams) -> Field:
    def field(x, u, sigma):
        A, B, S, w = jacobians_batch(x, u, sigma, p)
        return dynamics(x, u, sigma, p), A, B, S, w

    return field


def foh_integrate(
    x0,
    u_k,
    u_k1,
    sigma,
    dtau: float,
    field: Field,
    substeps: int = DEFAULT_SUBSTEPS,
    n_sub: int = 0,
):
    """Integrate the joint FOH ODE over a batch of independent intervals.

    Returns ``(A, Bm, Bp, S, w, x_end, sub)`` where ``sub`` is None unless
    ``n_sub`` interior sample maps were requested. ``substeps`` must be a
    multiple of ``n_sub + 1`` so samples land on RK4 step boundaries.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    u_k = np.atleast_2d(np.asarray(u_k, dtype=float))
    u_k1 = np.atleast_2d(np.asarray(u_k1, dtype=float))
    N, nx = x0.shape
    nu = u_k.shape[1]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (N,))
    if n_sub and substeps % (n_sub + 1):
        raise ValueError("substeps must be a multiple of n_sub + 1")

    eye = np.broadcast_to(np.eye(nx), (N, nx, nx))
    # packed state: x, Phi, Phi^-1, int Phi^-1 B lam-, ... lam+, ... S, ... w
    Y = [x0.copy(), eye.copy(), eye.copy(),
         np.zeros((N, nx, nu)), np.zeros((N, nx, nu)), np.zeros((N, nx)), np.zeros((N, nx))]

    def rhs(s, Y):
        x, Phi, Pinv = Y[0], Y[1], Y[2]
        lm, lp = 1.0 - s, s
        u = lm * u_k + lp * u_k1
        F, A, B, S, w = field(x, u, sigma)
        PB = Pinv @ B
        return [F, A @ Phi, -Pinv @ A, PB * lm, PB * lp,
                np.einsum("nij,nj->ni", Pinv, S), np.einsum("nij,nj->ni", Pinv, w)]

    h = dtau / substeps
    ds = 1.0 / substeps
    every = substeps // (n_sub + 1) if n_sub else 0
    records = []
    for i in range(substeps):
        s = i * ds
        k1 = rhs(s, Y)
        k2 = rhs(s + 0.5 * ds, [y + 0.5 * h * d for y, d in zip(Y, k1)])
        k3 = rhs(s + 0.5 * ds, [y + 0.5 * h * d for y, d in zip(Y, k2)])
        k4 = rhs(s + ds, [y + h * d for y, d in zip(Y, k3)])
        Y = [y + h / 6.0 * (a + 2 * b + 2 * c + d) for y, a, b, c, d in zip(Y, k1, k2, k3, k4)]
        if every and (i + 1) % every == 0 and (i + 1) < substeps:
            records.append(_maps_from(Y))

    for j, y in enumerate(Y):
        if not np.all(np.isfinite(y)):
            bad = np.unique(np.nonzero(~np.isfinite(y.reshape(N, -1)))[0])
            raise FloatingPointError(f"FOH integration produced non-finite values on intervals {bad.tolist()}")

    Ak, Bm, Bp, Sk, wk, _ = _maps_from(Y)
    sub = None
    if records:
        sub = SubsampleMaps(
            frac=np.arange(1, n_sub + 1) / (n_sub + 1),
            Ax=np.stack([r[0] for r in records], axis=1),
            Bm=np.stack([r[1] for r in records], axis=1),
            Bp=np.stack([r[2] for r in records], axis=1),
            S=np.stack([r[3] for r in records], axis=1),
            w=np.stack([r[4] for r in records], axis=1),
            x_ref=np.stack([r[5] for r in records], axis=1),
        )
    return Ak, Bm, Bp, Sk, wk, Y[0], sub


def _maps_from(Y):
    x, Phi, _, IBm, IBp, IS, Iw = Y
    return (Phi.copy(), Phi @ IBm, Phi @ IBp,
            np.einsum("nij,nj->ni", Phi, IS), np.einsum("nij,nj->ni", Phi, Iw), x.copy())


def discretize_foh(ref_traj, p: ModelParams = ModelParams(), substeps: int = DEFAULT_SUBSTEPS,
                   n_sub: int = 0) -> LtvSystem:
    """Discretize the car dynamics along one reference segment.

    ``ref_traj`` needs ``states`` (K, 3), ``controls`` (K, 2) and ``sigma`` on a
    uniform grid ``tau_k = k / (K - 1)``.
    """
    return discretize_many([ref_traj], p, substeps, n_sub)[0]


def discretize_many(refs: Sequence, p: ModelParams = ModelParams(), substeps: int = DEFAULT_SUBSTEPS,
                    n_sub: int = 0) -> list[LtvSystem]:
    """Discretize several segments with one batched integration.

    All segments must share the knot count K.
    """
    Ks = {np.asarray(r.states).shape[0] for r in refs}
    if len(Ks) != 1:
        raise ValueError("segments must share the knot count")
    K = Ks.pop()
    if K < 2:
        raise ValueError("need at least two knots")
    for r in refs:
        if not r.sigma > 0:
            raise ValueError("reference sigma must be positive")
    X = np.concatenate([np.asarray(r.states, dtype=float)[:-1] for r in refs])
    U0 = np.concatenate([np.asarray(r.controls, dtype=float)[:-1] for r in refs])
    U1 = np.concatenate([np.asarray(r.controls, dtype=float)[1:] for r in refs])
    sig = np.repeat([float(r.sigma) for r in refs], K - 1)
    try:
        A, Bm, Bp, S, w, xe, sub = foh_integrate(X, U0, U1, sig, 1.0 / (K - 1), car_field(p), substeps, n_sub)
    except FloatingPointError as exc:
        raise FloatingPointError(f"{exc} (flattened over {len(refs)} segments of {K - 1} intervals)") from exc
    out = []
    n = K - 1
    for i in range(len(refs)):
        sl = slice(i * n, (i + 1) * n)
        sub_i = None
        if sub is not None:
            sub_i = SubsampleMaps(sub.frac, sub.Ax[sl], sub.Bm[sl], sub.Bp[sl], sub.S[sl], sub.w[sl], sub.x_ref[sl])
        out.append(LtvSystem(A[sl], Bm[sl], Bp[sl], S[sl], w[sl], x_prop=xe[sl], sub=sub_i))
    return out


def integrate_segment(x0, controls, sigma, p: ModelParams = ModelParams(), n_dense: int = 20):
    """Integrate the nonlinear dynamics under FOH controls (RK4, ``n_dense`` steps per interval).

    Returns the dense state samples, ``(K - 1) * n_dense + 1`` rows, the
    first equal to ``x0``.
    """
    controls = np.asarray(controls, dtype=float)
    K = controls.shape[0]
    h = 1.0 / ((K - 1) * n_dense)
    x = np.asarray(x0, dtype=float).copy()
    out = [x.copy()]
    for k in range(K - 1):
        for i in range(n_dense):
            s0 = i / n_dense
            u = lambda s: (1 - s) * controls[k] + s * controls[k + 1]
            k1 = dynamics(x, u(s0), sigma, p)
            k2 = dynamics(x + 0.5 * h * k1, u(s0 + 0.5 / n_dense), sigma, p)
            k3 = dynamics(x + 0.5 * h * k2, u(s0 + 0.5 / n_dense), sigma, p)
            k4 = dynamics(x + h * k3, u(s0 + 1.0 / n_dense), sigma, p)
            x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            out.append(x.copy())
    return np.array(out)


def flow_defects(states, controls, sigma, p: ModelParams = ModelParams(), substeps: int = DEFAULT_SUBSTEPS):
    """Single-interval nonlinear flow from every knot minus the next knot, shape (K-1, 3)."""
    states = np.asarray(states, dtype=float)
    controls = np.asarray(controls, dtype=float)
    K = states.shape[0]
    N = K - 1
    x = states[:-1].copy()
    u0, u1 = controls[:-1], controls[1:]
    h = 1.0 / (N * substeps)
    for i in range(substeps):
        s = i / substeps
        ua = (1 - s) * u0 + s * u1
        sm = s + 0.5 / substeps
        um = (1 - sm) * u0 + sm * u1
        se = s + 1.0 / substeps
        ue = (1 - se) * u0 + se * u1
        k1 = dynamics(x, ua, sigma, p)
        k2 = dynamics(x + 0.5 * h * k1, um, sigma, p)
        k3 = dynamics(x + 0.5 * h * k2, um, sigma, p)
        k4 = dynamics(x + h * k3, ue, sigma, p)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x - states[1:]


# ---------------------------------------------------------------------------
# scaling


@dataclass(frozen=True)
class ScalingTransform:
    """Affine maps ``x = D_x xh + C_x``, ``u = D_u uh + C_u``, ``sigma = s sh + c``."""

    D_x: np.ndarray
    C_x: np.ndarray
    D_u: np.ndarray
    C_u: np.ndarray
    sigma_scale: float
    sigma_center: float = 0.0

    def __post_init__(self):
        if np.any(np.diag(self.D_x) <= 0) or np.any(np.diag(self.D_u) <= 0) or not self.sigma_scale > 0:
            raise ValueError("scaling factors must be strictly positive")


def make_scaling(x_bounds, u_bounds, sigma_bounds) -> ScalingTransform:
    """Map each ``[min, max]`` range onto ``[-1, 1]``.

    Bounds are given as ``(lo_vector, hi_vector)`` pairs (scalars for sigma).
    """
    def _dc(lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if np.any(hi - lo <= 0):
            raise ValueError(f"zero-width or inverted scaling range [{lo}, {hi}]")
        return (hi - lo) / 2.0, (hi + lo) / 2.0

    dx, cx = _dc(*x_bounds)
    du, cu = _dc(*u_bounds)
    ds, cs = _dc(*sigma_bounds)
    return ScalingTransform(np.diag(dx), cx, np.diag(du), cu, float(ds[0]), float(cs[0]))


def apply_scaling(t: ScalingTransform, q, kind: str = "state"):
    """Physical -> scaled. ``kind`` is state, control or sigma; LtvSystems are conjugated."""
    if isinstance(q, LtvSystem):
        return _scale_ltv(t, q)
    q = np.asarray(q, dtype=float)
    if kind == "state":
        return (q - t.C_x) / np.diag(t.D_x)
    if kind == "control":
        return (q - t.C_u) / np.diag(t.D_u)
    if kind == "sigma":
        return (q - t.sigma_center) / t.sigma_scale
    raise ValueError(f"unknown quantity kind {kind!r}")


def invert_scaling(t: ScalingTransform, q, kind: str = "state"):
    """Scaled -> physical. Inverse of ``apply_scaling``."""
    if isinstance(q, LtvSystem):
        return _unscale_ltv(t, q)
    q = np.asarray(q, dtype=float)
    if kind == "state":
        return q * np.diag(t.D_x) + t.C_x
    if kind == "control":
        return q * np.diag(t.D_u) + t.C_u
    if kind == "sigma":
        return q * t.sigma_scale + t.sigma_center
    raise ValueError(f"unknown quantity kind {kind!r}")


def _conj(t, Dx_out, A, Bm, Bp, S, w, Cx_out):
    """Rewrite ``y = A x + Bm u0 + Bp u1 + S sigma + w`` in scaled variables."""
    Dxi = 1.0 / np.diag(Dx_out)
    dx, du = np.diag(t.D_x), np.diag(t.D_u)
    Ah = Dxi[:, None] * A * dx
    Bmh = Dxi[:, None] * Bm * du
    Bph = Dxi[:, None] * Bp * du
    Sh = Dxi * S * t.sigma_scale
    off = (A @ t.C_x[:, None])[..., 0] + (Bm @ t.C_u[:, None])[..., 0] + (Bp @ t.C_u[:, None])[..., 0]
    wh = Dxi * (off + S * t.sigma_center + w - Cx_out)
    return Ah, Bmh, Bph, Sh, wh


def _scale_ltv(t: ScalingTransform, s: LtvSystem) -> LtvSystem:
    A, Bm, Bp, S, w = _conj(t, t.D_x, s.A, s.B_minus, s.B_plus, s.S, s.w, t.C_x)
    sub = None
    if s.sub is not None:
        m = s.sub
        Ax, sBm, sBp, sS, sw = _conj(t, t.D_x, m.Ax, m.Bm, m.Bp, m.S, m.w, t.C_x)
        x_ref = None if m.x_ref is None else apply_scaling(t, m.x_ref)
        sub = SubsampleMaps(m.frac, Ax, sBm, sBp, sS, sw, x_ref)
    x_prop = None if s.x_prop is None else apply_scaling(t, s.x_prop)
    return LtvSystem(A, Bm, Bp, S, w, x_prop=x_prop, sub=sub)


def _unscale_ltv(t: ScalingTransform, s: LtvSystem) -> LtvSystem:
    inv = replace(
        t,
        D_x=np.diag(1.0 / np.diag(t.D_x)),
        C_x=-t.C_x / np.diag(t.D_x),
        D_u=np.diag(1.0 / np.diag(t.D_u)),
        C_u=-t.C_u / np.diag(t.D_u),
        sigma_scale=1.0 / t.sigma_scale,
        sigma_center=-t.sigma_center / t.sigma_scale,
    )
    return _scale_ltv(inv, s)
