"""Scalar terminal payoffs ``phi_bar(y)`` with optional exact Gaussian smoothing."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from scipy import special


class Payoff:
    """Base class. ``smooth_exact`` returns ``(E phi(y+xi), d/dy)`` or ``None``."""

    kind = "abstract"
    lipschitz: Optional[float] = None

    def __call__(self, y):
        raise NotImplementedError

    def derivative(self, y):
        """Derivative, or a central difference when none is known."""
        y = np.asarray(y, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.abs(y))
        return (self(y + h) - self(y - h)) / (2 * h)

    def smooth_exact(self, y, variance: float):
        return None

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class ConstantPayoff(Payoff):
    value: float = 0.0
    kind = "constant"

    @property
    def lipschitz(self) -> float:
        return 0.0

    def __call__(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.value)

    def derivative(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def smooth_exact(self, y, variance):
        return self(y), self.derivative(y)


@dataclass(frozen=True)
class LinearPayoff(Payoff):
    """``slope * y + offset``."""

    slope: float = 1.0
    offset: float = 0.0
    kind = "linear"

    @property
    def lipschitz(self) -> float:
        return abs(self.slope)

    def __call__(self, y):
        return self.slope * np.asarray(y, dtype=float) + self.offset

    def derivative(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.slope)

    def smooth_exact(self, y, variance):
        return self(y), self.derivative(y)


@dataclass(frozen=True)
class QuadraticPayoff(Payoff):
    """``scale * y**2``."""

    scale: float = 1.0
    kind = "quadratic"

    def __call__(self, y):
        return self.scale * np.asarray(y, dtype=float) ** 2

    def derivative(self, y):
        return 2.0 * self.scale * np.asarray(y, dtype=float)

    def smooth_exact(self, y, variance):
        y = np.asarray(y, dtype=float)
        return self.scale * (y**2 + variance), 2.0 * self.scale * y


@dataclass(frozen=True)
class SinePayoff(Payoff):
    """``amplitude * sin(frequency * y + phase)``: bounded, smooth, Lipschitz."""

    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    kind = "sine"

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude * self.frequency)

    def __call__(self, y):
        return self.amplitude * np.sin(self.frequency * np.asarray(y, dtype=float) + self.phase)

    def derivative(self, y):
        return self.amplitude * self.frequency * np.cos(self.frequency * np.asarray(y, dtype=float) + self.phase)

    def smooth_exact(self, y, variance):
        damp = math.exp(-0.5 * self.frequency**2 * variance)
        return damp * self(y), damp * self.derivative(y)


@dataclass(frozen=True)
class TanhPayoff(Payoff):
    """``scale * tanh(y / width)``: bounded and Lipschitz, no closed-form smoothing."""

    scale: float = 1.0
    width: float = 1.0
    kind = "tanh"

    @property
    def lipschitz(self) -> float:
        return abs(self.scale / self.width)

    def __call__(self, y):
        return self.scale * np.tanh(np.asarray(y, dtype=float) / self.width)

    def derivative(self, y):
        return self.scale / self.width / np.cosh(np.asarray(y, dtype=float) / self.width) ** 2


@dataclass(frozen=True)
class StepPayoff(Payoff):
    """``level * 1{y > threshold}``: bounded but not continuous."""

    level: float = 1.0
    threshold: float = 0.0
    kind = "step"

    def __call__(self, y):
        return self.level * (np.asarray(y, dtype=float) > self.threshold).astype(float)

    def derivative(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def smooth_exact(self, y, variance):
        y = np.asarray(y, dtype=float)
        if variance <= 0:
            return self(y), self.derivative(y)
        s = math.sqrt(variance)
        z = (y - self.threshold) / s
        return self.level * special.ndtr(z), self.level * np.exp(-0.5 * z * z) / (s * math.sqrt(2 * math.pi))


_KINDS = {cls.kind: cls for cls in (ConstantPayoff, LinearPayoff, QuadraticPayoff, SinePayoff,
                                    TanhPayoff, StepPayoff)}


def payoff_from_dict(desc: dict) -> Payoff:
    desc = dict(desc)
    kind = desc.pop("kind", None)
    if kind not in _KINDS:
        raise ValueError(f"unknown payoff kind {kind!r}; expected one of {sorted(_KINDS)}")
    return _KINDS[kind](**{k: float(v) for k, v in desc.items()})
