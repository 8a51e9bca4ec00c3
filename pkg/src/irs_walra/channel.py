"""Synthetic wideband cascaded channels for an IRS-aided OFDM link.

The BS-IRS link is shared by every location; each receiver location gets an
independent IRS-receiver draw. Both links are sums of discrete paths, each
path landing on one delay tap with an exponential power-delay profile and a
planar-array response across the IRS elements. The first path of each link
is a line-of-sight component at tap 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .codebook import codebook
from .errors import DimensionMismatch, InvalidProfile, PadError
from .serialize import array_from_json, array_to_json

__all__ = [
    "OfdmConfig",
    "ChannelProfile",
    "LinkTaps",
    "CascadedChannel",
    "irs_shape",
    "array_response",
    "generate_bs_irs",
    "generate_irs_rx",
    "generate_location_channels",
    "cascade",
    "autocorrelation",
    "numerical_rank",
    "cfr",
]

RANK_RTOL = 1e-9

# stream tags for np.random.default_rng([seed, tag, ...])
STREAM_BS_IRS = 0
STREAM_TRAIN_LOCATION = 1
STREAM_EVAL_LOCATION = 2


@dataclass(frozen=True)
class OfdmConfig:
    M: int
    P0: float
    sigma2: float
    b: int
    N: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if not self.P0 > 0:
            raise ValueError("P0 must be > 0")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.b < 1:
            raise ValueError("b must be >= 1")

    @property
    def phases(self) -> np.ndarray:
        return codebook(self.b)

    @property
    def noise_floor(self) -> float:
        """Mean noise power of one OFDM symbol, M * sigma2."""
        return self.M * self.sigma2


@dataclass(frozen=True)
class ChannelProfile:
    """Multipath profile shared by all locations of one scenario.

    Angles are in degrees as (azimuth, elevation) seen from the IRS.
    ``irs_rx_paths`` is the inclusive range of the per-location path count.
    Rician factors split link power between the line-of-sight path and the
    scattered paths; ``inf`` puts all power on the line-of-sight path.
    """

    L_g: int = 3
    L_r: int = 6
    bs_irs_paths: int = 2
    irs_rx_paths: tuple = (2, 10)
    decay: float = 2.0
    bs_irs_rician_db: float = 10.0
    irs_rx_rician_db: float = 6.0
    bs_direction: tuple = (40.0, -5.0)
    region_direction: tuple = (-20.0, -10.0)
    region_halfwidth: float = 9.0
    scatter_spread: float = 60.0
    bs_irs_gain_db: float = -65.0
    irs_rx_gain_db: float = -65.0

    @property
    def L(self) -> int:
        return self.L_g + self.L_r - 1

    def validate(self) -> None:
        if not self.decay > 0:
            raise InvalidProfile(f"decay must be > 0, got {self.decay}")
        if self.L_g < 1 or self.L_r < 1:
            raise InvalidProfile("tap counts must be >= 1")
        lo, hi = self.irs_rx_paths
        if self.bs_irs_paths < 1 or lo < 1 or hi < lo:
            raise InvalidProfile(
                f"path counts out of range: bs_irs_paths={self.bs_irs_paths}, irs_rx_paths={self.irs_rx_paths}"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["irs_rx_paths"] = list(self.irs_rx_paths)
        d["bs_direction"] = list(self.bs_direction)
        d["region_direction"] = list(self.region_direction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelProfile":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise InvalidProfile(f"unknown channel profile fields: {sorted(extra)}")
        d = dict(d)
        for key in ("irs_rx_paths", "bs_direction", "region_direction"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class LinkTaps:
    """Tap matrix of one link: rows are delay taps, columns IRS elements."""

    taps: np.ndarray
    n_paths: int = 0

    @property
    def tap_count(self) -> int:
        return self.taps.shape[0]

    @property
    def N(self) -> int:
        return self.taps.shape[1]

    def to_json(self) -> dict:
        return {"taps": array_to_json(self.taps), "n_paths": self.n_paths}

    @classmethod
    def from_json(cls, d: dict) -> "LinkTaps":
        return cls(array_from_json(d["taps"]), d.get("n_paths", 0))


@dataclass
class CascadedChannel:
    H: np.ndarray
    n_paths: int = 0

    @property
    def L(self) -> int:
        return self.H.shape[0]

    @property
    def N(self) -> int:
        return self.H.shape[1]

    def autocorrelation(self) -> np.ndarray:
        return autocorrelation(self)

    def to_json(self) -> dict:
        return {"H": array_to_json(self.H), "n_paths": self.n_paths}

    @classmethod
    def from_json(cls, d: dict) -> "CascadedChannel":
        return cls(array_from_json(d["H"]), d.get("n_paths", 0))


def irs_shape(N: int) -> tuple:
    """Most nearly square (rows, cols) factorization of N."""
    rows = int(math.isqrt(N))
    while N % rows:
        rows -= 1
    return rows, N // rows


def array_response(N: int, azimuth, elevation) -> np.ndarray:
    """Half-wavelength planar-array response, shape (len(angles), N).

    Angles in radians.
    """
    rows, cols = irs_shape(N)
    az = np.atleast_1d(np.asarray(azimuth, dtype=float))
    el = np.atleast_1d(np.asarray(elevation, dtype=float))
    iy, iz = np.meshgrid(np.arange(cols), np.arange(rows))
    iy, iz = iy.ravel(), iz.ravel()
    uy = np.sin(az) * np.cos(el)
    uz = np.sin(el)
    return np.exp(1j * np.pi * (np.outer(uy, iy) + np.outer(uz, iz)))


def _draw_link(rng, N, n_taps, n_paths, decay, rician_db, gain_db, los_dir, scatter_center, scatter_spread):
    los_frac = 1.0 if math.isinf(rician_db) else 1.0 / (1.0 + 10 ** (-rician_db / 10))
    power = 10 ** (gain_db / 10)
    n_scatter = n_paths - 1

    delays = np.zeros(n_paths, dtype=int)
    az = np.empty(n_paths)
    el = np.empty(n_paths)
    az[0], el[0] = los_dir
    amp = np.empty(n_paths, dtype=complex)
    amp[0] = math.sqrt(power * los_frac) * np.exp(2j * np.pi * rng.random())
    if n_scatter:
        delays[1:] = rng.integers(0, n_taps, size=n_scatter)
        spread = math.radians(scatter_spread)
        az[1:] = scatter_center[0] + rng.uniform(-spread, spread, n_scatter)
        el[1:] = scatter_center[1] + rng.uniform(-spread / 2, spread / 2, n_scatter)
        weights = np.exp(-delays[1:] / decay)
        weights *= power * (1.0 - los_frac) / weights.sum()
        g = rng.standard_normal(n_scatter) + 1j * rng.standard_normal(n_scatter)
        amp[1:] = np.sqrt(weights / 2) * g

    taps = np.zeros((n_taps, N), dtype=complex)
    resp = array_response(N, az, el)
    np.add.at(taps, delays, amp[:, None] * resp)
    return LinkTaps(taps, n_paths)


def generate_bs_irs(seed: int, profile: ChannelProfile, N: int) -> LinkTaps:
    """BS-IRS taps for a scenario; identical for every location."""
    profile.validate()
    rng = np.random.default_rng([seed, STREAM_BS_IRS])
    los = tuple(math.radians(a) for a in profile.bs_direction)
    return _draw_link(
        rng, N, profile.L_g, profile.bs_irs_paths, profile.decay,
        profile.bs_irs_rician_db, profile.bs_irs_gain_db, los, los, profile.scatter_spread,
    )


def generate_irs_rx(seed: int, k: int, profile: ChannelProfile, N: int, *, evaluation: bool = False) -> LinkTaps:
    """IRS-receiver taps at location k.

    ``evaluation=True`` draws from an independent stream used for the
    region-average evaluation set, so evaluation locations never coincide
    with the sampled training locations.
    """
    profile.validate()
    tag = STREAM_EVAL_LOCATION if evaluation else STREAM_TRAIN_LOCATION
    rng = np.random.default_rng([seed, tag, k])
    lo, hi = profile.irs_rx_paths
    n_paths = int(rng.integers(lo, hi + 1))
    half = math.radians(profile.region_halfwidth)
    center = tuple(math.radians(a) for a in profile.region_direction)
    los = (center[0] + rng.uniform(-half, half), center[1] + rng.uniform(-half, half))
    return _draw_link(
        rng, N, profile.L_r, n_paths, profile.decay,
        profile.irs_rx_rician_db, profile.irs_rx_gain_db, los, center, profile.scatter_spread,
    )


def generate_location_channels(seed: int, k: int, profile: ChannelProfile, N: int, *, evaluation: bool = False):
    """(BS-IRS taps, IRS-receiver taps) for location k of the scenario ``seed``."""
    return generate_bs_irs(seed, profile, N), generate_irs_rx(seed, k, profile, N, evaluation=evaluation)


def cascade(g: LinkTaps, r: LinkTaps) -> CascadedChannel:
    """Per-element linear convolution of the two links."""
    G, Rt = np.asarray(g.taps), np.asarray(r.taps)
    if G.shape[1] != Rt.shape[1]:
        raise DimensionMismatch(f"element counts differ: {G.shape[1]} vs {Rt.shape[1]}")
    Lg, Lr = G.shape[0], Rt.shape[0]
    H = np.zeros((Lg + Lr - 1, G.shape[1]), dtype=complex)
    for i in range(Lg):
        H[i:i + Lr] += G[i] * Rt
    return CascadedChannel(H, g.n_paths * r.n_paths)


def autocorrelation(channel) -> np.ndarray:
    """R = H^H H for a cascaded channel (or a raw L x N matrix)."""
    H = channel.H if isinstance(channel, CascadedChannel) else np.asarray(channel)
    R = H.conj().T @ H
    return 0.5 * (R + R.conj().T)


def numerical_rank(A, rtol: float = RANK_RTOL) -> int:
    """Rank of a Hermitian matrix from its eigenvalues, relative threshold."""
    ev = np.abs(np.linalg.eigvalsh(np.asarray(A)))
    if ev.size == 0 or ev.max() == 0:
        return 0
    return int(np.sum(ev > rtol * ev.max()))


def cfr(channel, v, M: int) -> np.ndarray:
    """Frequency response on M subcarriers under reflection vector(s) v.

    Uses the unitary DFT, so ``||cfr||**2 == v^H R v``. ``v`` may be a
    single length-N vector or a (T, N) stack; output is (M,) or (T, M).
    """
    H = channel.H if isinstance(channel, CascadedChannel) else np.asarray(channel)
    L, N = H.shape
    if L > M:
        raise PadError(f"channel has {L} taps but only {M} subcarriers")
    v = np.asarray(v)
    if v.shape[-1] != N:
        raise DimensionMismatch(f"reflection vector length {v.shape[-1]} != N={N}")
    if not np.allclose(np.abs(v), 1.0, atol=1e-12):
        raise ValueError("reflection entries must have unit modulus")
    h = v @ H.T
    pad = np.zeros(h.shape[:-1] + (M,), dtype=complex)
    pad[..., :L] = h
    return np.fft.fft(pad, axis=-1, norm="ortho")
