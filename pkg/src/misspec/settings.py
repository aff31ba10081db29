"""Built-in Gaussian settings with closed-form transforms, used by the CLI and checks."""
from __future__ import annotations

import math

from .measures import DensityHandle, normal, q_of_p

# p0 = N(0, 2) and p = N(3/2, 1); p* = N(0, 1) on the left, N(1, 1) on the right
TRANSFORM_SETTINGS = {
    "left": {"p_mean": 1.5, "pstar_mean": 0.0},
    "right": {"p_mean": 1.5, "pstar_mean": 1.0},
}


def transform_setting(side: str) -> tuple[DensityHandle, DensityHandle]:
    """(p0, Q(P)) for one of the two built-in settings."""
    if side not in TRANSFORM_SETTINGS:
        raise ValueError(f"unknown setting {side!r}; valid: {', '.join(TRANSFORM_SETTINGS)}")
    s = TRANSFORM_SETTINGS[side]
    p0 = normal(0.0, 2.0)
    return p0, q_of_p(normal(s["p_mean"], 1.0), p0, normal(s["pstar_mean"], 1.0))


def transform_oracle(side: str, a: float) -> float:
    """P0 (p/p*)^a in closed form for the built-in settings."""
    if side == "left":
        return math.exp(9.0 * a * a / 4.0 - 9.0 * a / 8.0)
    return math.exp(a * a / 4.0 - 5.0 * a / 8.0)


ORACLE_LIMITS = {
    "left": (1.0, math.exp(9.0 / 8.0), -9.0 / 8.0),
    "right": (1.0, math.exp(-3.0 / 8.0), -5.0 / 8.0),
}


def boundary_margin(theta: float, theta_star: float, a: float) -> float:
    """-log P0 (p_theta/p_theta*)^a for P0 = N(0, 1) and the unit-variance normal location model."""
    d = theta - theta_star
    return 0.5 * a * d * (theta + theta_star - a * d)
