"""Physical coefficients of the micropolar system."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DomainError


@dataclass(frozen=True)
class PhysicalParams:
    """Density, inertia and viscosities.

    ``rho``, ``j``, ``eps``, ``alpha``, ``beta`` and ``kappa`` must be strictly
    positive; ``gamma`` may be zero.
    """

    rho: float = 1.0
    j: float = 1.0
    eps: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    kappa: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
                raise DomainError(f"parameter {name} must be a finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
            if name == "gamma":
                if value < 0:
                    raise DomainError(f"parameter gamma must be >= 0, got {value}")
            elif value <= 0:
                raise DomainError(f"parameter {name} must be > 0, got {value}")

    @property
    def velocity_diffusivity(self) -> float:
        """Effective heat-flow coefficient (2 eps + kappa) / (2 rho) of the velocity equation."""
        return (2.0 * self.eps + self.kappa) / (2.0 * self.rho)

    @property
    def micro_lame(self) -> tuple[float, float, float, float]:
        """Lame coefficients (alpha/j, (alpha+3 beta)/(3 j), gamma/j, 2 kappa/j) of the angular flow."""
        j = self.j
        return (self.alpha / j, (self.alpha + 3.0 * self.beta) / (3.0 * j), self.gamma / j, 2.0 * self.kappa / j)

    @property
    def grad_div_coefficient(self) -> float:
        """alpha/3 + beta - gamma, the coefficient of grad div in the angular equation."""
        return self.alpha / 3.0 + self.beta - self.gamma

    def as_dict(self) -> dict:
        return asdict(self)
