"""Discrete phase codebook and reflection vectors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["codebook", "phases_to_values", "ReflectionVector"]


def codebook(b: int) -> np.ndarray:
    """The 2**b unit-modulus phase values ``exp(1j * i * 2*pi / 2**b)``.

    Entries whose real or imaginary part is within rounding of zero are
    snapped, so b=1 gives exactly {1, -1} and b=2 exactly {1, j, -1, -j}.
    """
    if b < 1:
        raise ValueError(f"b must be >= 1, got {b}")
    vals = np.exp(2j * np.pi * np.arange(2**b) / 2**b)
    re = np.where(np.abs(vals.real) < 1e-15, 0.0, vals.real)
    im = np.where(np.abs(vals.imag) < 1e-15, 0.0, vals.imag)
    return re + 1j * im


def phases_to_values(indices, b: int) -> np.ndarray:
    """Map integer codebook indices (any shape) to complex phase values."""
    indices = np.asarray(indices)
    if indices.size and (indices.min() < 0 or indices.max() >= 2**b):
        raise ValueError(f"codebook index out of range for b={b}")
    return codebook(b)[indices]


@dataclass(frozen=True)
class ReflectionVector:
    phases: np.ndarray
    b: int

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=np.int64).reshape(-1)
        if phases.size and (phases.min() < 0 or phases.max() >= 2**self.b):
            raise ValueError(f"codebook index out of range for b={self.b}")
        object.__setattr__(self, "phases", phases)

    @property
    def N(self) -> int:
        return self.phases.size

    def value(self) -> np.ndarray:
        return phases_to_values(self.phases, self.b)

    def to_csv(self) -> str:
        return ",".join(str(int(p)) for p in self.phases)

    @classmethod
    def from_csv(cls, text: str, b: int) -> "ReflectionVector":
        return cls(np.array([int(s) for s in text.split(",") if s.strip()]), b)

    def __eq__(self, other):
        if not isinstance(other, ReflectionVector):
            return NotImplemented
        return self.b == other.b and np.array_equal(self.phases, other.phases)

    def __hash__(self):
        return hash((self.b, self.phases.tobytes()))
