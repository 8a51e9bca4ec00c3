"""Alternating low-rank estimation of channel autocorrelation matrices.

For a fixed orthonormal basis X the penalized objective

    phi(w, mu) = ||w - Phi mu||^2 + rho * ||C^T w - beta||^2

is an unconstrained quadratic in (w, mu); its minimizer is available in
closed form through ``Upsilon = (I + rho C C^T)^-1``.  The basis itself is
refreshed from the leading eigenvectors of the current iterate.  Applying
Upsilon only ever goes through the T_p x T_p Woodbury core
``rho^-1 I + C^T C``, factored once per training set.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonFiniteIterate, SingularCore
from .hermitian import map_from_coords, map_to_coords, rank_one_coords
from .serialize import array_to_json

__all__ = [
    "COMPLEX",
    "REAL",
    "WalraConfig",
    "WalraState",
    "SensingCache",
    "build_sensing_cache",
    "closed_form_update",
    "walra",
    "progressive_refine",
    "estimate_location",
    "estimate_region",
    "project_psd",
    "relative_error",
]

COMPLEX = "COMPLEX"
REAL = "REAL"
AUTO = "AUTO"
PINV_RTOL = 1e-10


@dataclass(frozen=True)
class WalraConfig:
    rho: float = 10.0
    I: int = 20
    D: object = AUTO
    epsilon: float = 0.005
    mode: str = COMPLEX
    psd: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be > 0")
        if self.I < 1:
            raise ValueError("I must be >= 1")
        if self.D != AUTO and (not isinstance(self.D, (int, np.integer)) or self.D < 1):
            raise ValueError(f"D must be a positive integer or 'AUTO', got {self.D!r}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.mode not in (COMPLEX, REAL):
            raise ValueError(f"mode must be COMPLEX or REAL, got {self.mode!r}")

    @classmethod
    def for_bits(cls, b: int, **kw) -> "WalraConfig":
        return cls(mode=REAL if b == 1 else COMPLEX, **kw)


@dataclass
class WalraState:
    R: np.ndarray
    mu: np.ndarray
    X: np.ndarray
    phi_trace: list = field(default_factory=list)

    def to_json(self) -> dict:
        ev = np.linalg.eigvalsh(self.R)[::-1]
        return {
            "R": array_to_json(self.R),
            "eigenvalues": ev.tolist(),
            "mu": np.asarray(self.mu).tolist(),
            "phi_trace": list(self.phi_trace),
        }


class SensingCache:
    """Measurement operator C, data beta and the factored Woodbury core.

    Column t of C is ``P0 * map_to_coords(v_t v_t^H)``. ``with_beta`` shares
    the factorization between locations measured under the same training
    reflections.
    """

    def __init__(self, C, beta, rho, _core=None):
        self.C = np.asarray(C, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.rho = float(rho)
        if self.C.shape[1] != self.beta.shape[0]:
            raise DimensionMismatch(f"C has {self.C.shape[1]} columns but beta has {self.beta.shape[0]} entries")
        if _core is None:
            core = np.eye(self.C.shape[1]) / self.rho + self.C.T @ self.C
            _core = scipy.linalg.cho_factor(core)
        self._core = _core
        self.chi = self.rho * self.upsilon_apply(self.C @ self.beta)

    @property
    def N(self) -> int:
        return int(round(np.sqrt(self.C.shape[0])))

    @property
    def T_p(self) -> int:
        return self.C.shape[1]

    @property
    def is_real(self) -> bool:
        """True when every training reflection is real (b = 1)."""
        return not np.any(self.C[self.N + 1::2])

    def with_beta(self, beta) -> "SensingCache":
        return SensingCache(self.C, beta, self.rho, _core=self._core)

    def core_solve(self, y):
        return scipy.linalg.cho_solve(self._core, y)

    def complement_apply(self, x):
        """(I - Upsilon) x."""
        return self.C @ self.core_solve(self.C.T @ x)

    def upsilon_apply(self, x):
        """Upsilon x = x - C (rho^-1 I + C^T C)^-1 C^T x."""
        return x - self.complement_apply(x)

    def objective(self, w, Phi, mu) -> float:
        r = w - Phi @ mu if Phi.size else w
        m = self.C.T @ w - self.beta
        return float(r @ r + self.rho * (m @ m))


def build_sensing_cache(training_vectors, measurements, ofdm, rho) -> SensingCache:
    """Assemble C from complex training vectors (T_p x N) and beta from q."""
    V = np.asarray(training_vectors)
    q = np.asarray(getattr(measurements, "q", measurements), dtype=float)
    if V.ndim != 2 or V.shape[0] != q.shape[0]:
        raise DimensionMismatch(f"{V.shape[0] if V.ndim == 2 else '?'} training vectors but {q.shape[0]} measurements")
    if V.shape[1] != ofdm.N:
        raise DimensionMismatch(f"training vectors have {V.shape[1]} elements but N={ofdm.N}")
    C = ofdm.P0 * rank_one_coords(V.T)
    return SensingCache(C, q - ofdm.noise_floor, rho)


def closed_form_update(cache: SensingCache, X) -> WalraState:
    """Exact minimizer of the penalized objective over (R, mu) for fixed X.

    Stationarity in w gives ``w = Upsilon Phi mu + chi`` with
    ``chi = rho Upsilon C beta``; substituting into the stationarity in mu,
    ``Phi^T (w - Phi mu) = 0``, leaves ``Phi^T (I - Upsilon) Phi mu = Phi^T chi``.
    """
    X = np.asarray(X)
    if X.shape[0] != cache.N:
        raise DimensionMismatch(f"basis has {X.shape[0]} rows, expected N={cache.N}")
    Phi = rank_one_coords(X)
    chi = cache.chi
    if not np.any(X):
        mu = np.zeros(X.shape[1])
        w = chi.copy()
    else:
        P_Phi = cache.complement_apply(Phi)
        A = Phi.T @ P_Phi
        A = 0.5 * (A + A.T)
        # |Phi columns| = 1 for unit basis vectors, and I - Upsilon is a contraction
        if np.max(np.abs(A)) <= PINV_RTOL * np.max(np.sum(Phi**2, axis=0)):
            raise SingularCore("reduced normal matrix vanished; the basis carries no measurement information")
        mu = np.linalg.pinv(A, rcond=PINV_RTOL, hermitian=True) @ (Phi.T @ chi)
        w = Phi @ mu - P_Phi @ mu + chi
    phi = cache.objective(w, Phi, mu)
    R = map_from_coords(w)
    return WalraState(R, mu, X, [phi])


def _leading_eigvecs(R, count, real):
    """Eigenvectors of the ``count`` largest (signed) eigenvalues."""
    ev, U = np.linalg.eigh(R.real if real else R)
    return U[:, ::-1][:, :count]


def _refresh_basis(state: WalraState, cache: SensingCache, count: int, real: bool):
    """Next basis: leading eigenvectors of the current iterate.

    The largest signed eigenvalues are used unless that choice would raise
    the objective above its current value, which can only happen when the
    iterate has negative eigenvalues larger in magnitude than the ones kept.
    Then the ``count`` eigenvalues largest in magnitude are kept instead;
    that choice is the exact minimizer over the basis and cannot increase
    the objective.
    """
    R = state.R.real if real else state.R
    ev, U = np.linalg.eigh(R)
    ev, U = ev[::-1], U[:, ::-1]
    dropped = float(np.sum(ev[count:] ** 2))
    # measurement term is unchanged by the basis, so compare distance terms
    w = map_to_coords(state.R)
    fit = state.phi_trace[-1] - float(np.sum((w - rank_one_coords(state.X) @ state.mu) ** 2)) if np.any(state.X) else None
    if fit is None or dropped + fit <= state.phi_trace[-1]:
        return U[:, :count]
    order = np.argsort(-np.abs(ev), kind="stable")
    return U[:, order[:count]]


def _basis_size(D, N, mode):
    return min(2 * D if mode == REAL else D, N)


def walra(cache: SensingCache, cfg: WalraConfig, X_init=None) -> WalraState:
    """Alternate eigen-basis refresh and closed-form updates for fixed rank D.

    Starts from ``X_init`` (zero basis by default), then performs ``cfg.I``
    refresh/update rounds. REAL mode keeps 2D real basis vectors and returns
    a real symmetric estimate.
    """
    if cfg.D == AUTO:
        raise ValueError("walra needs a fixed D; use progressive_refine for AUTO")
    real = cfg.mode == REAL
    if real and not cache.is_real:
        raise DimensionMismatch("REAL mode needs real (b = 1) training reflections")
    n = cache.N
    d = _basis_size(int(cfg.D), n, cfg.mode)
    X0 = np.zeros((n, d), dtype=float if real else complex) if X_init is None else X_init
    state = closed_form_update(cache, X0)
    trace = []
    for it in range(cfg.I + 1):
        if it:
            state = closed_form_update(cache, _refresh_basis(state, cache, d, real))
        phi = state.phi_trace[0]
        if not np.isfinite(phi):
            raise NonFiniteIterate(f"objective became {phi} after {it} iterations")
        trace.append(phi)
    state.phi_trace = trace
    if real:
        state.R = state.R.real
    return state


def _rel_diff(A, B) -> float:
    nb = np.linalg.norm(B)
    return np.inf if nb == 0 else float(np.linalg.norm(A - B) / nb)


def progressive_refine(cache: SensingCache, cfg: WalraConfig, D_max: int) -> tuple:
    """Run W-ALRA for D = 1, 2, ... warm-starting each rank from the last.

    Stops at the first D whose estimate differs from the previous one by
    less than ``cfg.epsilon`` (relative Frobenius), or at ``D_max``.
    Returns (state, D_stop).
    """
    n = cache.N
    real = cfg.mode == REAL
    # beyond this the basis already spans the whole space
    D_max = max(1, min(D_max, n if not real else -(-n // 2)))
    prev = walra(cache, replace(cfg, D=1))
    for D in range(2, D_max + 1):
        X0 = _leading_eigvecs(prev.R, _basis_size(D, n, cfg.mode), real)
        cur = walra(cache, replace(cfg, D=D), X_init=X0)
        if _rel_diff(cur.R, prev.R) < cfg.epsilon:
            return cur, D
        prev = cur
    return prev, D_max


def project_psd(R) -> np.ndarray:
    """Nearest PSD matrix in Frobenius norm (negative eigenvalues clipped)."""
    R = np.asarray(R)
    ev, U = np.linalg.eigh(R)
    out = (U * np.maximum(ev, 0.0)) @ U.conj().T
    out = 0.5 * (out + out.conj().T)
    return out.real if not np.iscomplexobj(R) else out


def relative_error(R_hat, R_true) -> float:
    return float(np.linalg.norm(R_hat - R_true) / np.linalg.norm(R_true))


@dataclass
class LocationEstimate:
    location_index: int
    R_raw: np.ndarray
    R: np.ndarray
    D: int
    phi_trace: list

    def to_json(self) -> dict:
        return {
            "location_index": self.location_index,
            "D": self.D,
            "R": array_to_json(self.R),
            "R_raw": array_to_json(self.R_raw),
            "eigenvalues": np.linalg.eigvalsh(self.R_raw)[::-1].tolist(),
            "phi_trace": list(self.phi_trace),
        }


def estimate_location(cache: SensingCache, cfg: WalraConfig, M: int, location_index: int = 0) -> LocationEstimate:
    """Fixed-D or progressive estimate for one location."""
    if cfg.D == AUTO:
        state, D = progressive_refine(cache, cfg, M)
    else:
        if cfg.D > M:
            raise ValueError(f"D={cfg.D} exceeds M={M}")
        state, D = walra(cache, cfg), int(cfg.D)
    R_out = project_psd(state.R) if cfg.psd else state.R
    return LocationEstimate(location_index, state.R, R_out, D, state.phi_trace)


def estimate_region(measurement_sets, cfg: WalraConfig, *, threads: int = 1, D_per_location=None):
    """Estimate each location independently and average the estimates.

    All sets must share the same training reflections. ``D_per_location``
    overrides ``cfg.D`` location by location (used for the known-rank
    benchmark). Returns (list of LocationEstimate, averaged matrix).
    """
    sets = list(measurement_sets)
    if not sets:
        raise ValueError("no measurement sets")
    first = sets[0]
    for ms in sets[1:]:
        if ms.training.shape != first.training.shape or not np.array_equal(ms.training, first.training):
            raise DimensionMismatch("locations were not measured under the same training reflections")
        if ms.ofdm != first.ofdm:
            raise DimensionMismatch("locations disagree on the OFDM configuration")
    base = build_sensing_cache(first.training_values(), first, first.ofdm, cfg.rho)
    M = first.ofdm.M

    def one(i):
        ms = sets[i]
        c = base if i == 0 else base.with_beta(ms.beta)
        local = cfg if D_per_location is None else replace(cfg, D=int(D_per_location[i]))
        return estimate_location(c, local, M, ms.location_index)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            estimates = list(pool.map(one, range(len(sets))))
    else:
        estimates = [one(i) for i in range(len(sets))]
    R_avg = sum(e.R for e in estimates) / len(estimates)
    return estimates, R_avg
