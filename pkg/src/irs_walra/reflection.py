"""Discrete-phase reflection design and benchmark selection schemes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codebook import ReflectionVector, codebook
from .errors import EmptyConditionCell, NonHermitianInput
from .hermitian import HERMITIAN_RTOL

__all__ = [
    "OptimizationReport",
    "quadratic_gain",
    "quantize_phases",
    "optimize_reflection",
    "exhaustive_optimum",
    "benchmark_rms",
    "random_max_sampling",
    "benchmark_csm",
    "benchmark_acsm",
    "average_gain",
]


@dataclass
class OptimizationReport:
    v_opt: ReflectionVector
    objective: float
    method: str
    iterations: int = 0
    restarts: int = 1
    objective_trace: list = field(default_factory=list)
    notes: str = ""

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "b": self.v_opt.b,
            "phases": self.v_opt.to_csv(),
            "objective": self.objective,
            "iterations": self.iterations,
            "restarts": self.restarts,
            "objective_trace": list(self.objective_trace),
            "notes": self.notes,
        }


def quadratic_gain(R, v) -> float:
    """v^H R v for a complex vector or a ReflectionVector."""
    if isinstance(v, ReflectionVector):
        v = v.value()
    return float(np.real(np.vdot(v, np.asarray(R) @ v)))


def _check(R):
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise NonHermitianInput(f"expected a square matrix, got shape {R.shape}")
    scale = np.linalg.norm(R)
    if np.linalg.norm(R - R.conj().T) > HERMITIAN_RTOL * scale:
        raise NonHermitianInput("matrix is not Hermitian")
    return 0.5 * (R + R.conj().T)


def quantize_phases(u, b: int) -> np.ndarray:
    """Codebook indices nearest in phase to each entry of u."""
    step = 2 * np.pi / 2**b
    return np.mod(np.rint(np.angle(u) / step), 2**b).astype(np.int64)


def _ascend(R, idx, cb, tol, trace):
    """Cyclic exact coordinate ascent until a full sweep changes nothing."""
    v = cb[idx]
    sweeps = 0
    while True:
        sweeps += 1
        changed = False
        for n in range(len(idx)):
            c = R[n] @ v - R[n, n] * v[n]
            scores = np.real(np.conj(cb) * c)
            best = int(np.argmax(scores))
            if scores[best] > scores[idx[n]] + tol:
                idx[n] = best
                v[n] = cb[best]
                changed = True
                trace.append(float(np.real(np.vdot(v, R @ v))))
        if not changed:
            return idx, sweeps


def optimize_reflection(R_hat, b: int, restarts: int = 16, seed=0) -> OptimizationReport:
    """Maximize v^H R v over the 2**b-phase codebook.

    The first start quantizes the principal eigenvector; the remaining
    ``restarts - 1`` starts are uniform random. Each start runs exact
    per-element coordinate ascent; the best end point is returned.
    """
    R = _check(R_hat)
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    N = R.shape[0]
    cb = codebook(b)
    rng = np.random.default_rng(seed)
    tol = 1e-12 * max(float(np.abs(R).max()), np.finfo(float).tiny)
    _, U = np.linalg.eigh(R)
    starts = [quantize_phases(U[:, -1], b)]
    starts += [rng.integers(0, 2**b, N) for _ in range(restarts - 1)]

    best = None
    total_sweeps = 0
    for start in starts:
        trace = [quadratic_gain(R, cb[start])]
        idx, sweeps = _ascend(R, start.copy(), cb, tol, trace)
        total_sweeps += sweeps
        obj = quadratic_gain(R, cb[idx])
        if best is None or obj > best[1]:
            best = (idx, obj, trace)
    idx, obj, trace = best
    return OptimizationReport(ReflectionVector(idx, b), obj, "coordinate-ascent", total_sweeps, restarts, trace)


def exhaustive_optimum(R, b: int):
    """Brute-force optimum over all 2**(b*N) vectors (small N only).

    Returns (indices, objective).
    """
    R = _check(R)
    N = R.shape[0]
    cb = codebook(b)
    grids = np.indices((2**b,) * N).reshape(N, -1).T
    V = cb[grids]
    vals = np.real(np.einsum("ti,ij,tj->t", V.conj(), R, V))
    i = int(np.argmax(vals))
    return grids[i], float(vals[i])


def _as_matrix(q):
    q = np.asarray(q, dtype=float)
    return q[None, :] if q.ndim == 1 else q


def benchmark_rms(q, training, b: int) -> ReflectionVector:
    """Random-max sampling over a measurement record.

    ``q`` is (K, T_p) measured power (or (T_p,) for one location) under the
    training index vectors ``training`` (T_p, N). Returns the training
    vector with the largest location-averaged power.
    """
    q = _as_matrix(q)
    t = int(np.argmax(q.mean(axis=0)))
    return ReflectionVector(np.asarray(training)[t], b)


def random_max_sampling(measure, T_p: int, N: int, b: int, seed) -> ReflectionVector:
    """Draw T_p random reflections, measure them with ``measure`` and keep the best.

    ``measure`` maps a (T_p, N) index array to measured power of shape
    (K, T_p) or (T_p,).
    """
    rng = np.random.default_rng(seed)
    training = rng.integers(0, 2**b, size=(T_p, N))
    return benchmark_rms(measure(training), training, b)


def conditional_means(q, training, b: int, elements=None) -> np.ndarray:
    """Mean measured power conditioned on each element's phase.

    Returns an array (len(elements), 2**b); raises EmptyConditionCell when
    some (element, phase) pair never occurs.
    """
    q = _as_matrix(q)
    training = np.asarray(training)
    elements = np.arange(training.shape[1]) if elements is None else np.asarray(elements)
    per_t = q.sum(axis=0)
    K = q.shape[0]
    out = np.empty((len(elements), 2**b))
    for row, n in enumerate(elements):
        col = training[:, n]
        counts = np.bincount(col, minlength=2**b)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise EmptyConditionCell(f"element {n} never took phase index {missing}; T_p={training.shape[0]} is too small")
        out[row] = np.bincount(col, weights=per_t, minlength=2**b) / (counts * K)
    return out


def benchmark_csm(q, training, b: int) -> ReflectionVector:
    """Conditional sample mean: per element, the phase with the largest
    conditional average power (ties go to the lowest index)."""
    means = conditional_means(q, training, b)
    return ReflectionVector(np.argmax(means, axis=1), b)


def _balanced_phases(rng, size, count, b):
    """Random phase columns in which every phase appears as evenly as possible."""
    base = np.resize(np.arange(2**b), size)
    return np.stack([rng.permutation(base) for _ in range(count)], axis=1)


def benchmark_acsm(q, training, b: int, stages: int = 2, *, measure=None, seed=0) -> OptimizationReport:
    """Adaptive conditional sample mean (two-group alternating variant).

    ``stages=1`` is plain CSM on the whole record. Otherwise stage 1 runs
    CSM on the first half of the record, and the other half of the budget
    is spent on ``2 * (stages - 1)`` adaptive rounds: one half of the
    elements is held at its current phases while the other half is
    randomized (balanced, so each phase appears about equally often),
    measured with ``measure`` and re-selected by CSM, then the halves swap.
    This is a reconstruction of the scheme and is flagged as such in the
    report notes.
    """
    q = _as_matrix(q)
    training = np.asarray(training)
    T_p, N = training.shape
    if stages < 1:
        raise ValueError("stages must be >= 1")
    if stages == 1:
        v = benchmark_csm(q, training, b)
        return OptimizationReport(v, float("nan"), "ACSM", 1, 1, notes="single stage: plain CSM")
    if measure is None:
        raise ValueError("ACSM with stages >= 2 needs a measurement function for the adaptive rounds")

    T1 = T_p // 2
    idx = benchmark_csm(q[:, :T1], training[:T1], b).phases.copy()
    groups = (np.arange(N // 2, N), np.arange(N // 2))
    rounds = 2 * (stages - 1)
    budget = T_p - T1
    sizes = [budget // rounds + (1 if r < budget % rounds else 0) for r in range(rounds)]
    rng = np.random.default_rng(seed)
    for r, size in enumerate(sizes):
        if size == 0:
            continue
        free = groups[r % 2]
        block = np.tile(idx, (size, 1))
        block[:, free] = _balanced_phases(rng, size, len(free), b)
        means = conditional_means(measure(block), block, b, elements=free)
        idx[free] = np.argmax(means, axis=1)
    return OptimizationReport(
        ReflectionVector(idx, b), float("nan"), "ACSM", rounds + 1, 1,
        notes="approximate reconstruction: half/half element split, budget halved between stages",
    )


def average_gain(v, R_list) -> float:
    """v^H (mean of R_list) v."""
    R_list = list(R_list)
    if not R_list:
        raise ValueError("empty list of autocorrelation matrices")
    return quadratic_gain(sum(R_list) / len(R_list), v)
