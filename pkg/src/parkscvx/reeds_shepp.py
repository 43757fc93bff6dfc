"""Reeds-Shepp shortest paths for a car that may drive forward and backward.

Candidate words are produced by five closed-form families (CSC, CCC, CCCC,
CCSC, CCSCC) in a frame normalized to unit turning radius. Each family is
evaluated on the goal as given and under the time-flip, reflection and
backwards transforms, which together reach all 48 words. A primitive with a
negative parameter is driven in reverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .vehicle_model import CarState

PI = math.pi
HALF_PI = 0.5 * math.pi
ZERO = 1e-10
# Primitive parameters this small are dropped from a word.
DROP = 1e-10

L, S, R = "L", "S", "R"
_TYPES = (
    (L, R, L), (R, L, R),
    (L, R, L, R), (R, L, R, L),
    (L, R, S, L), (R, L, S, R), (L, S, R, L), (R, S, L, R),
    (L, R, S, R), (R, L, S, L), (R, S, R, L), (L, S, L, R),
    (L, S, R), (R, S, L), (L, S, L), (R, S, R),
    (L, R, S, L, R), (R, L, S, R, L),
)


@dataclass(frozen=True)
class Primitive:
    kind: str  # L, S or R
    direction: int  # +1 forward, -1 reverse
    length: float  # >= 0, in units of the turning radius

    def __post_init__(self):
        if self.kind not in (L, S, R) or self.direction not in (1, -1) or self.length < 0:
            raise ValueError(f"bad primitive {self}")

    @property
    def code(self) -> str:
        return self.kind + ("+" if self.direction > 0 else "-")

    @property
    def signed(self) -> float:
        return self.direction * self.length


@dataclass(frozen=True)
class RsPath:
    primitives: tuple
    radius: float = 1.0

    def __post_init__(self):
        if len(self.primitives) > 5:
            raise ValueError("a Reeds-Shepp word has at most five primitives")
        if not self.radius > 0:
            raise ValueError("turning radius must be positive")

    @property
    def word(self) -> str:
        return "".join(p.code for p in self.primitives)

    @property
    def total_length(self) -> float:
        """Length in units of the turning radius."""
        return float(sum(p.length for p in self.primitives))

    @property
    def length(self) -> float:
        """Length in meters."""
        return self.total_length * self.radius

    @property
    def cusps(self) -> int:
        d = [p.direction for p in self.primitives]
        return sum(a != b for a, b in zip(d[:-1], d[1:]))


def mod2pi(x: float) -> float:
    """Wrap to [-pi, pi]."""
    v = math.fmod(x, 2 * PI)
    if v < -PI:
        v += 2 * PI
    elif v > PI:
        v -= 2 * PI
    return v


def _polar(x, y):
    return math.hypot(x, y), math.atan2(y, x)


def _tau_omega(u, v, xi, eta, phi):
    delta = mod2pi(u - v)
    A = math.sin(u) - math.sin(delta)
    B = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * A - xi * B, xi * A + eta * B)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = mod2pi(t1 + PI) if t2 < 0 else mod2pi(t1)
    omega = mod2pi(tau - u + v - phi)
    return tau, omega


# Base word solvers. Each returns the signed parameters or None.


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -ZERO:
        v = mod2pi(phi - t)
        if v >= -ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    if u1 >= 4.0:
        u = math.sqrt(u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = mod2pi(t1 + theta)
        v = mod2pi(t - phi)
        if t >= -ZERO and v >= -ZERO:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = mod2pi(theta + 0.5 * u + PI)
        v = mod2pi(phi - t + u)
        if t >= -ZERO and u <= ZERO:
            return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.hypot(xi, eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -HALF_PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -ZERO and v >= -ZERO:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = mod2pi(theta + math.atan2(r, -2.0))
        v = mod2pi(phi - HALF_PI - t)
        if t >= -ZERO and u <= ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = mod2pi(t + HALF_PI - phi)
        if t >= -ZERO and u <= ZERO and v <= ZERO:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= ZERO:
            t = mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = mod2pi(t - phi)
            if t >= -ZERO and v >= -ZERO:
                return t, u, v
    return None


# The four symmetric images of a goal (x, y, phi): identity, time-flip,
# reflection, and both. Each image maps the base solution to a word with
# parameters negated (time-flip) and/or L and R swapped (reflection).
def _images(x, y, phi):
    return (((x, y, phi), 1.0, 0), ((-x, y, -phi), -1.0, 0), ((x, -y, -phi), 1.0, 1), ((-x, -y, phi), -1.0, 1))


def _candidates(x, y, phi):
    """All closed-form candidates as ``(type_index, signed_params)``."""
    out = []

    def emit(solver, types, arrange, xx, yy, pp):
        for (a, b, c), sgn, refl in _images(xx, yy, pp):
            sol = solver(a, b, c)
            if sol is not None:
                out.append((types[refl], tuple(sgn * q for q in arrange(*sol))))

    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    # CSC
    emit(_lp_sp_lp, (14, 15), lambda t, u, v: (t, u, v), x, y, phi)
    emit(_lp_sp_rp, (12, 13), lambda t, u, v: (t, u, v), x, y, phi)
    # CCC, forwards and backwards
    emit(_lp_rm_l, (0, 1), lambda t, u, v: (t, u, v), x, y, phi)
    emit(_lp_rm_l, (0, 1), lambda t, u, v: (v, u, t), xb, yb, phi)
    # CCCC
    emit(_lp_rup_lum_rm, (2, 3), lambda t, u, v: (t, u, -u, v), x, y, phi)
    emit(_lp_rum_lum_rp, (2, 3), lambda t, u, v: (t, u, u, v), x, y, phi)
    # CCSC, forwards and backwards
    emit(_lp_rm_sm_lm, (4, 5), lambda t, u, v: (t, -HALF_PI, u, v), x, y, phi)
    emit(_lp_rm_sm_rm, (8, 9), lambda t, u, v: (t, -HALF_PI, u, v), x, y, phi)
    emit(_lp_rm_sm_lm, (6, 7), lambda t, u, v: (v, u, -HALF_PI, t), xb, yb, phi)
    emit(_lp_rm_sm_rm, (10, 11), lambda t, u, v: (v, u, -HALF_PI, t), xb, yb, phi)
    # CCSCC
    emit(_lp_rm_s_lm_rp, (16, 17), lambda t, u, v: (t, -HALF_PI, u, -HALF_PI, v), x, y, phi)
    return out


def _to_path(type_index: int, params, radius: float) -> RsPath:
    prims = []
    for kind, p in zip(_TYPES[type_index], params):
        if abs(p) <= DROP:
            continue
        d = 1 if p > 0 else -1
        if prims and prims[-1].kind == kind and prims[-1].direction == d:
            prims[-1] = Primitive(kind, d, prims[-1].length + abs(p))
        else:
            prims.append(Primitive(kind, d, abs(p)))
    return RsPath(tuple(prims), radius)


def _normalized_goal(q0, q1, radius):
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dx, dy = (q1[:2] - q0[:2]) / radius
    c, s = math.cos(q0[2]), math.sin(q0[2])
    return c * dx + s * dy, -s * dx + c * dy, q1[2] - q0[2]


def all_paths(q0: CarState, q1: CarState, radius: float = 1.0) -> list:
    """Every closed-form candidate connecting the two poses."""
    if not radius > 0:
        raise ValueError("turning radius must be positive")
    x, y, phi = _normalized_goal(q0, q1, radius)
    return [_to_path(i, p, radius) for i, p in _candidates(x, y, phi)]


def shortest_path(q0: CarState, q1: CarState, radius: float = 1.0) -> RsPath:
    """Shortest candidate; near-ties go to the lexicographically smallest word."""
    paths = all_paths(q0, q1, radius)
    if not paths:  # cannot happen for finite poses; kept as a guard
        raise RuntimeError("no Reeds-Shepp candidate found")
    best = min(p.total_length for p in paths)
    return min((p for p in paths if p.total_length <= best + 1e-12), key=lambda p: p.word)


def _advance(x, y, th, prim: Primitive, amount: float, radius: float):
    """Pose after driving ``amount`` (units of radius) along ``prim``."""
    v = prim.direction * amount
    if prim.kind == L:
        x += radius * (math.sin(th + v) - math.sin(th))
        y += radius * (-math.cos(th + v) + math.cos(th))
        th += v
    elif prim.kind == R:
        x += radius * (-math.sin(th - v) + math.sin(th))
        y += radius * (math.cos(th - v) - math.cos(th))
        th -= v
    else:
        x += radius * v * math.cos(th)
        y += radius * v * math.sin(th)
    return x, y, th


def endpoint(path: RsPath, q0: CarState) -> CarState:
    x, y, th = np.asarray(q0, dtype=float)
    for p in path.primitives:
        x, y, th = _advance(x, y, th, p, p.length, path.radius)
    return CarState(float(x), float(y), float(th))


def sample(path: RsPath, q0: CarState, radius: float = None, ds: float = 0.1) -> list:
    """Poses every ``ds`` meters of arc length, with the exact endpoint appended.

    ``radius`` defaults to the path's own radius.
    """
    if not ds > 0:
        raise ValueError("ds must be positive")
    if radius is not None and radius != path.radius:
        path = RsPath(path.primitives, radius)
    total = path.length
    n = int(math.floor(total / ds))
    stations = [i * ds for i in range(n + 1) if i * ds < total - 1e-12]
    if not stations:
        stations = [0.0]
    out = []
    x0, y0, th0 = (float(a) for a in np.asarray(q0, dtype=float))
    for s in stations:
        x, y, th = x0, y0, th0
        rem = s / path.radius
        for p in path.primitives:
            step = min(rem, p.length)
            x, y, th = _advance(x, y, th, p, step, path.radius)
            rem -= step
            if rem <= 0:
                break
        out.append(CarState(x, y, th))
    out.append(endpoint(path, q0))
    return out
