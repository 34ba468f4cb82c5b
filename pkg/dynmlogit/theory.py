"""Two-period household borrowing model: closed forms and comparative statics.

A household with no assets earns y now and expects (1+g)y next period. A
borrower pays a fixed cost κ on top of gross interest r; a saver earns r and pays
nothing. With quadratic utility and β(1+r) = 1 the optimal loan is

    b* = (g y - κ(1+r)) / (2+r)

and lenders cap borrowing at b̃ = π θ y, θ being the verifiable share of income.
Everything here is a pure function of HouseholdParams.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from dynmlogit.errors import BoundaryPoint, ConfigInvalid

COST_MODES = ("fixed", "proportional")


@dataclass(frozen=True)
class HouseholdParams:
    income_now: float
    growth: float = 0.0
    interest: float = 0.0
    fixed_cost: float = 0.0
    verify_share: float = 1.0
    limit_slope: float = 1.0
    discount: float = 1.0
    bliss: float | None = None

    def __post_init__(self):
        if not self.income_now > 0:
            raise ConfigInvalid(f"income_now must be > 0 (got {self.income_now})")
        if not 0.0 <= self.verify_share <= 1.0:
            raise ConfigInvalid(f"verify_share must lie in [0, 1] (got {self.verify_share})")
        if self.interest < 0:
            raise ConfigInvalid(f"interest must be >= 0 (got {self.interest})")
        if self.fixed_cost < 0:
            raise ConfigInvalid(f"fixed_cost must be >= 0 (got {self.fixed_cost})")
        if not self.limit_slope > 0:
            raise ConfigInvalid(f"limit_slope must be > 0 (got {self.limit_slope})")
        if not 0.0 < self.discount <= 1.0:
            raise ConfigInvalid(f"discount must lie in (0, 1] (got {self.discount})")

    @property
    def bliss_level(self) -> float:
        if self.bliss is not None:
            return self.bliss
        return 10.0 * max(self.income_now, (1.0 + self.growth) * self.income_now)

    def replace(self, **changes) -> "HouseholdParams":
        return replace(self, **changes)


def _check_mode(mode: str):
    if mode not in COST_MODES:
        raise ConfigInvalid(f"unknown cost mode {mode!r}; expected one of {COST_MODES}")


def consumption_path(p: HouseholdParams, borrow: float, mode: str = "fixed") -> tuple[float, float]:
    """(c_now, c_next) for a given loan; negative borrow means saving.

    mode="proportional" charges b(1+r+κ) on repayment instead of (b+κ)(1+r).
    """
    _check_mode(mode)
    y, g, r, k = p.income_now, p.growth, p.interest, p.fixed_cost
    c_now = y + borrow
    if borrow <= 0:
        return c_now, (1.0 + g) * y - borrow * (1.0 + r)
    if mode == "proportional":
        return c_now, (1.0 + g) * y - borrow * (1.0 + r + k)
    return c_now, (1.0 + g) * y - (borrow + k) * (1.0 + r)


def expected_utility(p: HouseholdParams, borrow: float, mode: str = "fixed") -> float:
    """Quadratic (certainty-equivalent) lifetime utility u(c_now) + β u(c_next)."""
    c_now, c_next = consumption_path(p, borrow, mode)
    bliss = p.bliss_level
    return -0.5 * (bliss - c_now) ** 2 - p.discount * 0.5 * (bliss - c_next) ** 2


def desired_borrowing(p: HouseholdParams, mode: str = "fixed") -> float:
    _check_mode(mode)
    y, g, r, k = p.income_now, p.growth, p.interest, p.fixed_cost
    if mode == "proportional":
        return g * y / (2.0 + r + k)
    return (g * y - k * (1.0 + r)) / (2.0 + r)


def credit_limit(p: HouseholdParams) -> float:
    return p.limit_slope * p.verify_share * p.income_now


def min_verifiable_share(p: HouseholdParams, mode: str = "fixed") -> float:
    """θ at which the desired loan just meets the credit limit.

    May be <= 0 (never binding) or > 1 (unattainable even when fully formal).
    """
    return desired_borrowing(p, mode) / (p.limit_slope * p.income_now)


# ── comparative statics ─────────────────────────────────────────────────────

DERIVATIVES = (
    ("db_dg", +1),
    ("db_dy", +1),
    ("db_dr", -1),
    ("db_dkappa", -1),
    ("dtheta_dkappa", -1),
    ("dtheta_dr", -1),
    ("d2theta_dkappa_dr", -1),
    ("d2theta_dkappa_dy", +1),
)


@dataclass(frozen=True)
class SignReport:
    values: dict[str, float]
    expected: dict[str, int] = field(default_factory=lambda: dict(DERIVATIVES))

    @property
    def signs(self) -> dict[str, int]:
        return {k: int(np.sign(v)) for k, v in self.values.items()}

    @property
    def admissible(self) -> bool:
        return all(self.signs[k] == s for k, s in self.expected.items())

    def as_frame(self) -> pd.DataFrame:
        rows = [
            {
                "derivative": name,
                "value": self.values[name],
                "sign": self.signs[name],
                "expected_sign": expected,
                "admissible": self.signs[name] == expected,
            }
            for name, expected in self.expected.items()
        ]
        return pd.DataFrame(rows)


def comparative_statics(p: HouseholdParams) -> SignReport:
    """Analytic partials of b* and θ_min at an interior point.

    The eight signs are (+, +, -, -, -, -, -, +) wherever the desired loan is
    positive, i.e. g y > κ(1+r).
    """
    y, g, r, k, pi = p.income_now, p.growth, p.interest, p.fixed_cost, p.limit_slope
    numerator = g * y - k * (1.0 + r)
    if numerator == 0.0:
        raise BoundaryPoint("g*y == kappa*(1+r): desired borrowing is zero and signs are undefined")
    d = 2.0 + r
    values = {
        "db_dg": y / d,
        "db_dy": g / d,
        # d/dr [(gy - k(1+r)) / (2+r)] = (-k(2+r) - (gy - k(1+r))) / (2+r)^2 = -(gy + k) / (2+r)^2
        "db_dr": -(g * y + k) / d**2,
        "db_dkappa": -(1.0 + r) / d,
        "dtheta_dkappa": -(1.0 + r) / (d * pi * y),
        "dtheta_dr": -(g * y + k) / (d**2 * pi * y),
        "d2theta_dkappa_dr": -1.0 / (d**2 * pi * y),
        "d2theta_dkappa_dy": (1.0 + r) / (d * pi * y**2),
    }
    return SignReport(values=values)


def sign_table(p: HouseholdParams) -> pd.DataFrame:
    return comparative_statics(p).as_frame()
