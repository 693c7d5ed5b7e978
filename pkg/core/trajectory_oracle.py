"""Quantum-jump unravelling of the energy-measurement master equation.

Each trajectory follows the no-jump evolution
c̃(s) = c·exp[(−iE'/ħ − κE'²/2)s] until its norm ‖c̃(s)‖² falls to a uniform
threshold r, then jumps to Ĥc̃/‖Ĥc̃‖ and draws a new r. Because Ĥ is
diagonal the norm is known in closed form, so jump instants are located by
bisection instead of a first-order step test.
"""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from core.constants import CONSTANTS
from core.errors import SimulationError
from core.spectral_solver import SpectralBasis
from core.squid_model import InvalidParameters
from core.state_prep import InvalidState

logger = logging.getLogger(__name__)

JUMP_PROBABILITY_BOUND = 0.1
BISECTION_STEPS = 60
MAX_JUMPS_PER_STEP = 1000
POPULATED = 1e-14
OFFSET_MODES = ("ground", "none", "lowest_populated")


@dataclass(frozen=True)
class StepTooLarge(SimulationError):
    pass


@dataclass(frozen=True)
class TrajectoryConfig:
    n_trajectories: int
    seed: int
    dt: float
    t_max: float
    energy_offset: str = "ground"
    batch_size: int = 1000
    workers: int = 1
    record_every: int = 1

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise InvalidParameters(f"n_trajectories must be at least 1, got {self.n_trajectories}")
        if not (self.dt > 0 and self.t_max > 0):
            raise InvalidParameters("dt and t_max must be positive")
        if self.energy_offset not in OFFSET_MODES:
            raise InvalidParameters(f"energy_offset must be one of {OFFSET_MODES}, got {self.energy_offset!r}")
        if self.batch_size < 1 or self.workers < 1 or self.record_every < 1:
            raise InvalidParameters("batch_size, workers and record_every must be positive")
        steps = self.n_steps
        if abs(steps * self.dt - self.t_max) > 1e-9 * self.t_max:
            raise InvalidParameters(f"dt={self.dt:.6e} does not divide t_max={self.t_max:.6e}")
        if steps % self.record_every:
            raise InvalidParameters(f"record_every={self.record_every} does not divide {steps} steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def record_times(self) -> np.ndarray:
        return np.arange(0, self.n_steps + 1, self.record_every) * self.dt


@dataclass(frozen=True, eq=False)
class TrajectoryResult:
    times: np.ndarray
    mean_x: np.ndarray
    stderr_x: np.ndarray
    final_coefficients: np.ndarray
    max_population: np.ndarray
    mean_density: np.ndarray
    norm_deviation: float
    n_trajectories: int
    jumps: int
    seed: int
    kappa_e: float


@dataclass(frozen=True)
class _BatchTotals:
    sum_x: np.ndarray
    sum_x2: np.ndarray
    sum_rho: np.ndarray
    final: np.ndarray
    norm_deviation: float
    jumps: int


@dataclass(frozen=True, eq=False)
class _Problem:
    shifted: np.ndarray  # E − offset, eV
    x_matrix: np.ndarray
    psi0: np.ndarray
    kappa: float
    config: TrajectoryConfig

    @property
    def decay(self) -> np.ndarray:
        return self.kappa * self.shifted**2

    @property
    def phase_rate(self) -> np.ndarray:
        return self.shifted / CONSTANTS.hbar


def _energy_offset(energies: np.ndarray, psi0: np.ndarray, mode: str) -> float:
    if mode == "none":
        return 0.0
    if mode == "ground":
        return float(energies[0])
    populated = np.nonzero(np.abs(psi0) ** 2 > POPULATED)[0]
    return float(energies[populated[0]])


def _no_jump(coefficients: np.ndarray, elapsed: np.ndarray, problem: _Problem) -> np.ndarray:
    exponent = (-1j * problem.phase_rate - 0.5 * problem.decay)[None, :] * elapsed[:, None]
    return coefficients * np.exp(exponent)


def _norm_after(coefficients: np.ndarray, elapsed: np.ndarray, problem: _Problem) -> np.ndarray:
    weights = np.abs(coefficients) ** 2
    return np.sum(weights * np.exp(-problem.decay[None, :] * elapsed[:, None]), axis=1)


def _locate_jumps(
    coefficients: np.ndarray, lo: np.ndarray, hi: np.ndarray, thresholds: np.ndarray, problem: _Problem
) -> np.ndarray:
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = _norm_after(coefficients, mid, problem) > thresholds
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    return hi


def _run_batch(problem: _Problem, size: int, seed: np.random.SeedSequence) -> _BatchTotals:
    config = problem.config
    rng = np.random.Generator(np.random.PCG64(seed))
    anchor = np.repeat(problem.psi0[None, :], size, axis=0)
    t_anchor = np.zeros(size)
    thresholds = rng.random(size)

    records = config.n_steps // config.record_every + 1
    sum_x = np.zeros(records)
    sum_x2 = np.zeros(records)
    norm_deviation = 0.0
    jumps = 0
    jumping_enabled = problem.kappa > 0.0 and np.any(problem.shifted != 0.0)

    def current(t: float) -> np.ndarray:
        state = _no_jump(anchor, t - t_anchor, problem)
        return state / np.linalg.norm(state, axis=1)[:, None]

    def record(slot: int, t: float) -> np.ndarray:
        nonlocal norm_deviation
        state = current(t)
        norm_deviation = max(norm_deviation, float(np.max(np.abs(np.linalg.norm(state, axis=1) - 1.0))))
        values = np.real(np.einsum("bi,ij,bj->b", state.conj(), problem.x_matrix, state))
        sum_x[slot] = np.sum(values)
        sum_x2[slot] = np.sum(values**2)
        return state

    state = record(0, 0.0)
    for step in range(config.n_steps):
        t_start, t_end = step * config.dt, (step + 1) * config.dt
        if jumping_enabled:
            for _ in range(MAX_JUMPS_PER_STEP):
                elapsed_end = np.full(size, t_end) - t_anchor
                hit = np.nonzero(_norm_after(anchor, elapsed_end, problem) <= thresholds)[0]
                if hit.size == 0:
                    break
                lo = np.maximum(t_start - t_anchor[hit], 0.0)
                at = _locate_jumps(anchor[hit], lo, elapsed_end[hit], thresholds[hit], problem)
                before = _no_jump(anchor[hit], at, problem)
                after = before * problem.shifted[None, :]
                anchor[hit] = after / np.linalg.norm(after, axis=1)[:, None]
                t_anchor[hit] = t_anchor[hit] + at
                thresholds[hit] = rng.random(hit.size)
                jumps += int(hit.size)
            else:
                raise StepTooLarge(f"more than {MAX_JUMPS_PER_STEP} jump rounds inside one step")
        if (step + 1) % config.record_every == 0:
            state = record((step + 1) // config.record_every, t_end)

    return _BatchTotals(
        sum_x=sum_x,
        sum_x2=sum_x2,
        sum_rho=np.einsum("bi,bj->ij", state, state.conj()),
        final=state,
        norm_deviation=norm_deviation,
        jumps=jumps,
    )


def run_trajectories(
    psi0,
    basis: SpectralBasis,
    kappa_e: float,
    config: TrajectoryConfig,
) -> TrajectoryResult:
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.ndim != 1 or psi0.size > basis.n_levels:
        raise InvalidState(f"initial coefficients must be a vector of at most {basis.n_levels} entries")
    norm = float(np.sum(np.abs(psi0) ** 2))
    if abs(norm - 1.0) > 1e-9:
        raise InvalidState(f"initial state norm {norm:.12f} differs from 1")
    if not (math.isfinite(kappa_e) and kappa_e >= 0.0):
        raise InvalidParameters(f"kappa_e must be non-negative, got {kappa_e}")

    levels = psi0.size
    energies = basis.energies[:levels]
    shifted = energies - _energy_offset(energies, psi0, config.energy_offset)
    populated = np.abs(psi0) ** 2 > POPULATED
    probability = kappa_e * float(np.max(shifted[populated] ** 2)) * config.dt
    if probability >= JUMP_PROBABILITY_BOUND:
        raise StepTooLarge(
            f"jump probability per step {probability:.3g} exceeds {JUMP_PROBABILITY_BOUND}; reduce dt"
        )

    problem = _Problem(
        shifted=shifted,
        x_matrix=basis.x_matrix[:levels, :levels],
        psi0=psi0,
        kappa=kappa_e,
        config=config,
    )
    sizes = _batch_sizes(config.n_trajectories, config.batch_size)
    seeds = np.random.SeedSequence(config.seed).spawn(len(sizes))
    logger.info(
        "running %d trajectories in %d batches (kappa=%.6e, dt=%.6e s, %d steps)",
        config.n_trajectories, len(sizes), kappa_e, config.dt, config.n_steps,
    )
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        totals: List[_BatchTotals] = list(pool.map(lambda args: _run_batch(problem, *args), zip(sizes, seeds)))

    # Batches are reduced in spawn order, so the result does not depend on the worker count.
    n = config.n_trajectories
    sum_x = np.zeros_like(totals[0].sum_x)
    sum_x2 = np.zeros_like(totals[0].sum_x2)
    sum_rho = np.zeros((levels, levels), dtype=complex)
    for batch in totals:
        sum_x += batch.sum_x
        sum_x2 += batch.sum_x2
        sum_rho += batch.sum_rho
    mean_x = sum_x / n
    if n > 1:
        variance = np.maximum(sum_x2 - n * mean_x**2, 0.0) / (n - 1)
        stderr = np.sqrt(variance / n)
    else:
        stderr = np.zeros_like(mean_x)
    final = np.concatenate([batch.final for batch in totals], axis=0)
    return TrajectoryResult(
        times=config.record_times(),
        mean_x=mean_x,
        stderr_x=stderr,
        final_coefficients=final,
        max_population=np.max(np.abs(final) ** 2, axis=1),
        mean_density=sum_rho / n,
        norm_deviation=max(batch.norm_deviation for batch in totals),
        n_trajectories=n,
        jumps=sum(batch.jumps for batch in totals),
        seed=config.seed,
        kappa_e=kappa_e,
    )


def _batch_sizes(total: int, batch_size: int) -> List[int]:
    full, rest = divmod(total, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


def eigenstate_convergence(result: TrajectoryResult, threshold: float = 0.99) -> float:
    """Fraction of trajectories whose largest terminal population exceeds ``threshold``."""
    return float(np.mean(result.max_population > threshold))


def outcome_counts(result: TrajectoryResult, threshold: float = 0.99) -> np.ndarray:
    populations = np.abs(result.final_coefficients) ** 2
    converged = result.max_population > threshold
    winners = np.argmax(populations[converged], axis=1)
    return np.bincount(winners, minlength=populations.shape[1])


def max_z_score(result: TrajectoryResult, reference, floor: float = 1e-12) -> float:
    """Largest |mean − reference| in units of the standard error."""
    reference = np.asarray(reference, dtype=float)
    deviation = np.abs(result.mean_x - reference)
    return float(np.max(deviation / np.maximum(result.stderr_x, floor)))


def dump_trajectories(result: TrajectoryResult, limit: Optional[int] = None) -> str:
    populations = np.abs(result.final_coefficients) ** 2
    if limit is not None:
        populations = populations[:limit]
    ids = np.arange(populations.shape[0])
    header = "trajectory," + ",".join(f"p_{n}" for n in range(populations.shape[1]))
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.column_stack([ids, populations]),
        fmt=["%d"] + ["%.12e"] * populations.shape[1],
        delimiter=",",
        header=header,
        comments="# ",
    )
    return buffer.getvalue()


__all__ = [
    "StepTooLarge",
    "TrajectoryConfig",
    "TrajectoryResult",
    "dump_trajectories",
    "eigenstate_convergence",
    "max_z_score",
    "outcome_counts",
    "run_trajectories",
]
