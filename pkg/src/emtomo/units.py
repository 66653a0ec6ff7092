"""Physical constants bundle.

All numerical routines work in whatever unit system the caller fixes here.
The default instance sets hbar = m = omega = e = c = 1, which keeps every
scale factor of order one on the default grids.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class UnitsContext:
    hbar: float = 1.0
    m: float = 1.0
    omega: float = 1.0
    e: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("hbar", "m", "omega", "e", "c"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"units constant {name!r} must be positive")

    def with_hbar(self, hbar: float) -> "UnitsContext":
        return replace(self, hbar=hbar)

    @property
    def momentum_scale(self) -> float:
        """sqrt(m*omega*hbar), the natural quantizer displacement scale."""
        return (self.m * self.omega * self.hbar) ** 0.5

    @property
    def inverse_length(self) -> float:
        """sqrt(m*omega/hbar), the natural phase-rate scale."""
        return (self.m * self.omega / self.hbar) ** 0.5


INTERNAL = UnitsContext()
