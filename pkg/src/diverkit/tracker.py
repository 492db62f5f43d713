"""Mixed-domain periodic-motion tracker.

Spatial side: a hidden-Markov chain over grid windows, where the observation
for a window is its blurred mean intensity, the emission model rewards
intensities inside the configured flipper range, and transitions penalize
window-center distance. A log-domain Viterbi table tracks the best path into
every window; the pool of best terminal windows yields candidate trajectories.

Frequency side: the intensity series along each candidate trajectory goes
through a direct DFT, and the maximum amplitude over the 1-2 Hz swim-gait
bins is the trajectory's score. A cycle reports a detection when the winning
score reaches ``delta``.

Ties anywhere break toward the lower window index so results are
reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (
    BoundingBox,
    DetectionResult,
    Frame,
    GridConfig,
    TrackerConfig,
    ValidationError,
    grid_for,
    luminance,
    window_center,
)


class StateError(RuntimeError):
    """An operation was called in the wrong phase of a detection cycle."""


@dataclass
class OpCounters:
    """Exact work counters surfaced by the bench subcommand."""

    transition_evals: int = 0
    dft_mults: int = 0

    def reset(self) -> None:
        self.transition_evals = 0
        self.dft_mults = 0


# ---------------------------------------------------------------------------
# evidence and transition models
# ---------------------------------------------------------------------------


def range_distance(value: float, lo: float, hi: float) -> float:
    """Distance from ``value`` to the closed interval [lo, hi] (0 inside)."""
    if lo <= value <= hi:
        return 0.0
    return min(abs(value - lo), abs(value - hi))


def evidence_loglik(intensity: float, cfg: TrackerConfig) -> float:
    """Log emission probability: log(1-eps) inside the range, log(eps) outside."""
    lo, hi = cfg.intensity_range
    if lo <= intensity <= hi:
        return math.log(1.0 - cfg.epsilon)
    return math.log(cfg.epsilon)


def evidence_loglik_vec(evidence: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    lo, hi = cfg.intensity_range
    inside = (evidence >= lo) & (evidence <= hi)
    return np.where(inside, math.log(1.0 - cfg.epsilon), math.log(cfg.epsilon))


def evidence_prior(intensity: float, cfg: TrackerConfig) -> float:
    """Unnormalized presence weight 1 / (1 + distance-to-range)."""
    lo, hi = cfg.intensity_range
    return 1.0 / (1.0 + range_distance(intensity, lo, hi))


def evidence_prior_vec(evidence: np.ndarray, cfg: TrackerConfig) -> np.ndarray:
    lo, hi = cfg.intensity_range
    dist = np.maximum(lo - evidence, 0.0) + np.maximum(evidence - hi, 0.0)
    return 1.0 / (1.0 + dist)


def transition_raw_weight(i: int, j: int, grid: GridConfig) -> float:
    """Smoothed reciprocal of the window-center distance, before row normalization."""
    xi, yi = window_center(grid, i)
    xj, yj = window_center(grid, j)
    return 1.0 / (1.0 + math.hypot(xj - xi, yj - yi))


def transition_log_matrix(grid: GridConfig) -> np.ndarray:
    """Log transition matrix; row i is the normalized distribution over j."""
    m = grid.num_windows
    centers = np.array([window_center(grid, i) for i in range(m)])
    diff = centers[:, None, :] - centers[None, :, :]
    raw = 1.0 / (1.0 + np.sqrt((diff**2).sum(axis=2)))
    probs = raw / raw.sum(axis=1, keepdims=True)
    return np.log(probs)


def transition_logweight(i: int, j: int, grid: GridConfig) -> float:
    """Log probability of moving from window i to window j."""
    grid._check_index(i)
    grid._check_index(j)
    total = sum(transition_raw_weight(i, k, grid) for k in range(grid.num_windows))
    return math.log(transition_raw_weight(i, j, grid) / total)


# ---------------------------------------------------------------------------
# dynamic table
# ---------------------------------------------------------------------------


@dataclass
class HmmTables:
    """Per-cycle Viterbi table: best log path score into each window.

    The table starts one step before the first frame, in a virtual state
    distributed like the normalized presence prior of frame 0. Each frame then
    performs one full M^2 table update, so a cycle of ``slide`` frames costs
    exactly ``slide * M^2`` transition evaluations. Backpointer row 0 points
    at the virtual state and is never part of a reconstructed trajectory.
    """

    slide: int
    log_mu: np.ndarray
    backptr: np.ndarray
    cycle_t: int = 0

    @classmethod
    def fresh(cls, num_windows: int, slide: int) -> "HmmTables":
        return cls(
            slide=slide,
            log_mu=np.zeros(num_windows),
            backptr=np.zeros((slide, num_windows), dtype=np.int64),
        )


def viterbi_update(
    tables: HmmTables,
    evidence: np.ndarray,
    cfg: TrackerConfig,
    log_trans: np.ndarray,
    counters: OpCounters | None = None,
    backend: str | None = None,
) -> HmmTables:
    """Advance the table by one frame of evidence (one M^2 update)."""
    if tables.cycle_t >= tables.slide:
        raise StateError("detection cycle already holds slide-size frames")
    evidence = np.asarray(evidence, dtype=np.float64)
    if evidence.shape != tables.log_mu.shape:
        raise ValidationError("evidence length disagrees with the grid")
    if tables.cycle_t == 0:
        prior = evidence_prior_vec(evidence, cfg)
        prev = np.log(prior / prior.sum())
    else:
        prev = tables.log_mu
    log_lik = evidence_loglik_vec(evidence, cfg)
    new_mu, backptr, pairs = kernels.viterbi_step(prev, log_trans, log_lik, backend)
    if counters is not None:
        counters.transition_evals += pairs
    tables.log_mu = new_mu
    tables.backptr[tables.cycle_t] = backptr
    tables.cycle_t += 1
    return tables


def top_p_trajectories(
    tables: HmmTables, pool: int
) -> list[tuple[np.ndarray, float]]:
    """Best-scoring trajectory into each of the ``pool`` best terminal windows.

    Sorted by descending log score, ties toward the lower terminal index.
    """
    if tables.cycle_t != tables.slide:
        raise StateError(
            f"need {tables.slide} frames before extraction, have {tables.cycle_t}"
        )
    m = tables.log_mu.shape[0]
    order = sorted(range(m), key=lambda j: (-tables.log_mu[j], j))
    out = []
    for j in order[: min(pool, m)]:
        traj = np.empty(tables.slide, dtype=np.int64)
        traj[-1] = j
        for t in range(tables.slide - 1, 0, -1):
            traj[t - 1] = tables.backptr[t, traj[t]]
        out.append((traj, float(tables.log_mu[j])))
    return out


# ---------------------------------------------------------------------------
# frequency side
# ---------------------------------------------------------------------------


def dtft(
    series: np.ndarray,
    counters: OpCounters | None = None,
    backend: str | None = None,
) -> np.ndarray:
    """Direct DFT of an intensity series (X[k] = sum_t x[t] e^{-j2pi tk/T})."""
    spectrum, mults = kernels.dft_direct(series, backend)
    if counters is not None:
        counters.dft_mults += mults
    return spectrum


def band_score(spectrum: np.ndarray, cfg: TrackerConfig) -> float:
    """Maximum amplitude over the in-band integer bins (DC never included)."""
    if spectrum.shape[0] != cfg.slide:
        raise ValidationError("spectrum length disagrees with the slide size")
    bins = cfg.band_bins()
    return float(np.abs(spectrum[bins]).max())


# ---------------------------------------------------------------------------
# detection cycles
# ---------------------------------------------------------------------------


def frame_evidence(
    frame: Frame,
    grid: GridConfig,
    sigma: float,
    backend: str | None = None,
) -> np.ndarray:
    """Evidence vector of a frame: blurred mean intensity of every window."""
    if frame.channels != 1:
        raise ValidationError("evidence needs gray frames; convert via luminance()")
    if frame.width < grid.cols * grid.window_w or frame.height < grid.rows * grid.window_h:
        raise ValidationError("frame dimensions inconsistent with the grid")
    blurred = kernels.gaussian_blur(frame.pixels, sigma, backend=backend)
    return kernels.window_means(
        blurred, grid.rows, grid.cols, grid.window_h, grid.window_w, backend=backend
    )


def detect_from_evidence(
    evidence: np.ndarray,
    cfg: TrackerConfig,
    grid: GridConfig,
    log_trans: np.ndarray,
    cycle_index: int = 0,
    counters: OpCounters | None = None,
    backend: str | None = None,
) -> DetectionResult:
    """One detection cycle over a (slide, M) evidence matrix."""
    evidence = np.asarray(evidence, dtype=np.float64)
    if evidence.shape != (cfg.slide, grid.num_windows):
        raise ValidationError(
            f"evidence must be ({cfg.slide}, {grid.num_windows}), got {evidence.shape}"
        )
    tables = HmmTables.fresh(grid.num_windows, cfg.slide)
    for t in range(cfg.slide):
        viterbi_update(tables, evidence[t], cfg, log_trans, counters, backend)
    pool = top_p_trajectories(tables, cfg.pool)

    best_traj = None
    best_score = -1.0
    pool_scores = []
    for traj, _ in pool:
        series = evidence[np.arange(cfg.slide), traj]
        score = band_score(dtft(series, counters, backend), cfg)
        pool_scores.append((int(traj[-1]), score))
        if score > best_score or (
            score == best_score and best_traj is not None and traj[-1] < best_traj[-1]
        ):
            best_traj = traj
            best_score = score

    cx, cy = window_center(grid, int(best_traj[-1]))
    bbox = BoundingBox(cx, cy, grid.window_w, grid.window_h, best_score)
    return DetectionResult(
        trajectory=best_traj,
        score=best_score,
        detected=best_score >= cfg.delta,
        bbox=bbox,
        cycle_index=cycle_index,
        pool_scores=tuple(pool_scores),
    )


def run_detection_cycle(
    frames: list[Frame],
    cfg: TrackerConfig,
    grid: GridConfig | None = None,
    cycle_index: int = 0,
    counters: OpCounters | None = None,
    backend: str | None = None,
) -> DetectionResult:
    """Run one cycle over exactly ``slide`` gray frames."""
    if len(frames) != cfg.slide:
        raise ValidationError(f"a detection cycle needs exactly {cfg.slide} frames")
    if grid is None:
        grid = grid_for(cfg, frames[0].width, frames[0].height)
    evidence = np.stack(
        [frame_evidence(f, grid, cfg.gauss_sigma, backend) for f in frames]
    )
    log_trans = transition_log_matrix(grid)
    return detect_from_evidence(
        evidence, cfg, grid, log_trans, cycle_index, counters, backend
    )


class Tracker:
    """Stateful convenience wrapper: grid, cached transitions, counters."""

    def __init__(
        self,
        cfg: TrackerConfig,
        frame_w: int,
        frame_h: int,
        backend: str | None = None,
    ):
        self.cfg = cfg
        self.grid = grid_for(cfg, frame_w, frame_h)
        self.log_trans = transition_log_matrix(self.grid)
        self.counters = OpCounters()
        self.backend = backend

    def evidence(self, frame: Frame) -> np.ndarray:
        gray = luminance(frame) if frame.channels == 3 else frame
        return frame_evidence(gray, self.grid, self.cfg.gauss_sigma, self.backend)

    def detect(self, evidence: np.ndarray, cycle_index: int = 0) -> DetectionResult:
        return detect_from_evidence(
            evidence,
            self.cfg,
            self.grid,
            self.log_trans,
            cycle_index,
            self.counters,
            self.backend,
        )


def cycle_start_frames(frame_count: int, cfg: TrackerConfig) -> list[int]:
    """First frame index of every detection cycle in a sequence."""
    if frame_count < cfg.slide:
        raise ValidationError(
            f"sequence of {frame_count} frames is shorter than the slide size"
        )
    return list(range(0, frame_count - cfg.slide + 1, cfg.stride))


def track_sequence(
    frames: list[Frame],
    cfg: TrackerConfig,
    counters: OpCounters | None = None,
    backend: str | None = None,
) -> list[DetectionResult]:
    """Detect over a whole sequence, one cycle every ``stride`` frames."""
    starts = cycle_start_frames(len(frames), cfg)
    tracker = Tracker(cfg, frames[0].width, frames[0].height, backend)
    if counters is not None:
        tracker.counters = counters
    evidence = np.stack([tracker.evidence(f) for f in frames])
    results = []
    for cycle_index, start in enumerate(starts):
        results.append(
            tracker.detect(evidence[start : start + cfg.slide], cycle_index)
        )
    return results
