"""State-triggered constraints ``g(z) < 0  =>  c(z) <= 0``.

The implication is encoded by the continuous residual

    h(z) = -min(g(z), 0) * c(z) <= 0

which comes from the analytic complementarity slack ``eta* = -min(g, 0)``. An
OR of several triggers is handled by taking the minimum over the trigger
values first, since ``min(g1, g2) < 0`` exactly when either one fires.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SINGLE = "single"
OR = "or"


@dataclass(frozen=True)
class AffineFn:
    """``coef . z + const``"""

    coef: tuple
    const: float = 0.0

    def __call__(self, z):
        return np.asarray(z, dtype=float) @ np.asarray(self.coef, dtype=float) + self.const

    @property
    def grad(self) -> np.ndarray:
        return np.asarray(self.coef, dtype=float)

    def to_dict(self) -> dict:
        return {"coef": [float(c) for c in self.coef], "const": float(self.const)}

    @classmethod
    def from_dict(cls, d) -> "AffineFn":
        return cls(tuple(float(c) for c in d["coef"]), float(d["const"]))


@dataclass(frozen=True)
class Stc:
    triggers: tuple
    constraint: AffineFn
    combinator: str = SINGLE

    def __post_init__(self):
        if len(self.triggers) < 1:
            raise ValueError("an STC needs at least one trigger")
        if self.combinator == OR and len(self.triggers) < 2:
            raise ValueError("an OR trigger needs at least two trigger functions")
        if self.combinator == SINGLE and len(self.triggers) != 1:
            raise ValueError("a single STC has exactly one trigger")
        if self.combinator not in (SINGLE, OR):
            raise ValueError(f"unknown combinator {self.combinator!r}")

    def trigger_value(self, z):
        """Combined trigger value and the index of the active trigger."""
        vals = np.stack([g(z) for g in self.triggers], axis=-1)
        # argmin returns the first index on ties
        return vals.min(axis=-1), vals.argmin(axis=-1)

    def tightened(self, margin: float) -> "Stc":
        """Copy that fires ``margin`` earlier and demands ``margin`` more clearance."""
        if margin == 0:
            return self
        trig = tuple(AffineFn(g.coef, g.const - margin * float(np.linalg.norm(g.grad))) for g in self.triggers)
        c = self.constraint
        return Stc(trig, AffineFn(c.coef, c.const + margin * float(np.linalg.norm(c.grad))), self.combinator)

    def to_dict(self) -> dict:
        return {"combinator": self.combinator, "triggers": [g.to_dict() for g in self.triggers],
                "constraint": self.constraint.to_dict()}

    @classmethod
    def from_dict(cls, d) -> "Stc":
        return cls(tuple(AffineFn.from_dict(g) for g in d["triggers"]), AffineFn.from_dict(d["constraint"]),
                   d.get("combinator", SINGLE))


def eta_star(g_value):
    """Analytic complementarity slack ``-min(g, 0)``."""
    return -np.minimum(g_value, 0.0)


def residual(s: Stc, z):
    """``h(z) = -min(g(z), 0) * c(z)``; nonpositive iff the implication holds."""
    g, _ = s.trigger_value(z)
    return eta_star(g) * s.constraint(z)


def linearize(s: Stc, z_bar):
    """First-order model of the residual at ``z_bar``.

    Returns ``(h_bar, grad)`` with ``h_lin(z) = h_bar + grad . (z - z_bar)``.
    ``min(g, 0)`` is differentiated as ``grad g`` when ``g < 0`` and as zero
    otherwise, so a dormant constraint (including ``g == 0``) linearizes to zero.
    Works on a single point or a batch ``(..., n)``.
    """
    z_bar = np.asarray(z_bar, dtype=float)
    g, active = s.trigger_value(z_bar)
    c = s.constraint(z_bar)
    G = np.stack([t.grad for t in s.triggers])  # (n_trig, n)
    firing = (g < 0.0)[..., None]
    dmin = np.where(firing, G[active], 0.0)
    h_bar = eta_star(g) * c
    grad = -dmin * np.asarray(c)[..., None] + eta_star(g)[..., None] * s.constraint.grad
    return h_bar, grad


def parking_gap_stc(b: float, y_top: float) -> Stc:
    """Obstacles on both sides of a gap ``|x_w| <= b``: outside it, keep ``y_w >= y_top``."""
    if not b > 0:
        raise ValueError("gap half-width must be positive")
    return Stc(
        triggers=(AffineFn((1.0, 0.0, 0.0), b), AffineFn((-1.0, 0.0, 0.0), b)),
        constraint=AffineFn((0.0, -1.0, 0.0), y_top),
        combinator=OR,
    )
