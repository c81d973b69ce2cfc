"""Model coefficients shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class FracParams:
    """Order, tempering weight and gain of the fractional boundary damping."""

    alpha: float
    eta: float = 1.0
    gamma: float = 1.0
    # gamma = 0 switches the damping off; only the conservative solver tests use it
    allow_zero_gamma: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.eta >= 0.0:
            raise ValueError(f"eta must be nonnegative, got {self.eta}")
        if not (self.gamma > 0.0 or (self.gamma == 0.0 and self.allow_zero_gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def kappa(self) -> float:
        """sin(alpha*pi)/pi, the normalisation of the diffusive representation."""
        return math.sin(self.alpha * math.pi) / math.pi


@dataclass(frozen=True)
class SystemParams:
    """Wave-speed ratio ``a``, coupling ``b`` and the damping parameters."""

    a: float
    b: float
    frac: FracParams = field(default_factory=lambda: FracParams(alpha=0.5))
    # b = 0 is outside the model but useful for structural tests of the solver
    allow_zero_b: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not self.a > 0.0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.b == 0.0 and not self.allow_zero_b:
            raise ValueError("b must be nonzero")
        if not math.isfinite(self.b):
            raise ValueError(f"b must be finite, got {self.b}")

    @classmethod
    def make(cls, a, b, alpha, eta=1.0, gamma=1.0, allow_zero_gamma=False, **kw) -> "SystemParams":
        frac = FracParams(alpha=alpha, eta=eta, gamma=gamma, allow_zero_gamma=allow_zero_gamma)
        return cls(a=a, b=b, frac=frac, **kw)

    @property
    def alpha(self) -> float:
        return self.frac.alpha

    @property
    def eta(self) -> float:
        return self.frac.eta

    @property
    def gamma(self) -> float:
        return self.frac.gamma

    def replace(self, **changes) -> "SystemParams":
        d = self.to_dict()
        d.update(changes)
        return SystemParams.make(
            **d, allow_zero_b=self.allow_zero_b, allow_zero_gamma=self.frac.allow_zero_gamma
        )

    def to_dict(self) -> dict:
        f = self.frac
        return {"a": self.a, "b": self.b, "alpha": f.alpha, "eta": f.eta, "gamma": f.gamma}
