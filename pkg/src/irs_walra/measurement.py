"""Averaged receive-power measurements under random training reflections.

Two fidelities are available. ``"waveform"`` synthesizes every subcarrier of
every OFDM symbol and needs the cascaded channel itself. ``"moment"`` draws
the averaged noise term directly from a Gaussian with the exact mean and
variance of the waveform model, and only needs the autocorrelation matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import OfdmConfig, cfr
from .codebook import phases_to_values
from .errors import DimensionMismatch

__all__ = [
    "MeasurementSet",
    "draw_training_vectors",
    "measure_power",
    "noise_variance",
    "simulate_measurements",
]

FIDELITIES = ("moment", "waveform")


@dataclass
class MeasurementSet:
    """Power measurements at one location.

    ``training`` holds the codebook indices of the T_p training reflections
    (shape T_p x N), shared by all locations of a campaign; ``q[t]`` is the
    averaged power measured under reflection t, in watts.
    """

    location_index: int
    q: np.ndarray
    training: np.ndarray
    J: int
    ofdm: OfdmConfig

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.training = np.asarray(self.training, dtype=np.int64)
        if self.training.ndim != 2 or self.training.shape[0] != self.q.shape[0]:
            raise DimensionMismatch(
                f"{self.q.shape[0]} measurements but training array has shape {self.training.shape}"
            )
        if self.training.shape[1] != self.ofdm.N:
            raise DimensionMismatch(
                f"training vectors have {self.training.shape[1]} elements but N={self.ofdm.N}"
            )
        if np.any(self.q < 0):
            raise ValueError("power measurements must be non-negative")

    @property
    def T_p(self) -> int:
        return self.q.shape[0]

    @property
    def entries(self):
        return list(enumerate(self.q.tolist()))

    @property
    def beta(self) -> np.ndarray:
        """Measurements with the mean noise power removed."""
        return self.q - self.ofdm.noise_floor

    def training_values(self) -> np.ndarray:
        return phases_to_values(self.training, self.ofdm.b)

    def head(self, T_p: int) -> "MeasurementSet":
        """The first T_p measurements."""
        return MeasurementSet(self.location_index, self.q[:T_p], self.training[:T_p], self.J, self.ofdm)

    def to_json(self) -> dict:
        o = self.ofdm
        return {
            "location_index": self.location_index,
            "J": self.J,
            "ofdm": {"M": o.M, "P0": o.P0, "sigma2": o.sigma2, "b": o.b, "N": o.N},
            "q": self.q.tolist(),
            "training": self.training.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> "MeasurementSet":
        training = np.asarray(d["training"], dtype=np.int64)
        if training.ndim == 1:
            training = training.reshape(len(d["q"]), -1)
        return cls(d["location_index"], np.asarray(d["q"], dtype=float), training, d["J"], OfdmConfig(**d["ofdm"]))


def draw_training_vectors(T_p: int, N: int, b: int, seed) -> np.ndarray:
    """T_p i.i.d. uniform codebook index vectors, shape (T_p, N)."""
    if T_p < 1:
        raise ValueError("T_p must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.integers(0, 2**b, size=(T_p, N))


def noise_variance(gain, cfg: OfdmConfig, J: int):
    """Variance of the J-sample averaged noise power given v^H R v = gain."""
    return (cfg.M * cfg.sigma2**2 + 2 * cfg.sigma2 * cfg.P0 * np.asarray(gain)) / J


def _quadratic(R, V):
    return np.real(np.einsum("ti,ij,tj->t", V.conj(), R, V))


def measure_power(R, v, cfg: OfdmConfig, J: int, rng, *, mode: str = "moment", H=None):
    """Averaged power q for reflection v (length N) or a batch (T, N).

    ``mode="waveform"`` needs the cascaded channel ``H`` (L x N); ``R`` may
    then be None. Returns a float for a single vector, else a (T,) array.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    v = np.asarray(v)
    single = v.ndim == 1
    V = np.atleast_2d(v)
    if V.shape[1] != cfg.N:
        raise DimensionMismatch(f"reflection vector length {V.shape[1]} != N={cfg.N}")
    if mode == "moment":
        R = np.asarray(R)
        if R.shape != (cfg.N, cfg.N):
            raise DimensionMismatch(f"R has shape {R.shape}, expected ({cfg.N}, {cfg.N})")
        gain = np.maximum(_quadratic(R, V), 0.0)
        if cfg.sigma2 == 0:
            q = cfg.P0 * gain
        else:
            noise = cfg.noise_floor + np.sqrt(noise_variance(gain, cfg, J)) * rng.standard_normal(gain.shape)
            q = np.maximum(cfg.P0 * gain + noise, 0.0)
    elif mode == "waveform":
        if H is None:
            raise ValueError("waveform mode needs the cascaded channel H")
        H = getattr(H, "H", H)
        if H.shape[1] != cfg.N:
            raise DimensionMismatch(f"H has {H.shape[1]} columns, expected N={cfg.N}")
        hf = cfr(H, V, cfg.M)[:, None, :]
        T = V.shape[0]
        s = np.sqrt(cfg.P0) * np.exp(2j * np.pi * rng.random((T, J, cfg.M)))
        z = np.sqrt(cfg.sigma2 / 2) * (
            rng.standard_normal((T, J, cfg.M)) + 1j * rng.standard_normal((T, J, cfg.M))
        )
        q = np.mean(np.sum(np.abs(hf * s + z) ** 2, axis=-1), axis=-1)
    else:
        raise ValueError(f"unknown fidelity {mode!r}; expected one of {FIDELITIES}")
    return float(q[0]) if single else q


def simulate_measurements(
    k: int, training: np.ndarray, cfg: OfdmConfig, J: int, rng, *, R=None, H=None, mode: str = "moment"
) -> MeasurementSet:
    """Measure every training reflection at location k."""
    V = phases_to_values(training, cfg.b)
    q = measure_power(R, V, cfg, J, rng, mode=mode, H=H)
    return MeasurementSet(k, q, training, J, cfg)
