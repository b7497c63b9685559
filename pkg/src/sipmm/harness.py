"""Monte Carlo strong-error experiments.

For every path a fine Brownian lattice drives a reference solution; the
schemes under test run on pairwise-coarsened copies of the same increments,
so the pathwise difference isolates discretisation error.  Paths are
processed in fixed-size blocks whose composition does not depend on the
worker count, and squared errors are reduced in path-index order, so results
are bitwise reproducible for a given configuration.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import brownian
from .errors import ConvergenceError, DomainError
from .model import ModelParams, validate
from .projection import ProjectionConfig
from .schemes import SchemeKind, check_bem_step_size, integrate_batch, sipem_step, sipmm_step

PATH_BLOCK = 1024
ERROR_NORMS = ("terminal", "max")


@dataclass(frozen=True)
class ExperimentConfig:
    params: ModelParams
    q: float
    T: float = 1.0
    levels: tuple[int, ...] = (6, 7, 8, 9, 10)
    ref_level: int = 15
    ref_scheme: SchemeKind = SchemeKind.BEM
    schemes: tuple[SchemeKind, ...] = (SchemeKind.SIPMM, SchemeKind.BEM)
    num_paths: int = 10_000
    seed: int = 0
    error_norm: str = "terminal"

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(l) for l in self.levels))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        validate(self.params)
        ProjectionConfig(self.q, self.params.r)
        if not self.T > 0:
            raise DomainError(f"T must be positive, got {self.T!r}")
        if not self.levels:
            raise DomainError("at least one level is required")
        if len(set(self.levels)) != len(self.levels):
            raise DomainError(f"levels must be distinct, got {self.levels}")
        if min(self.levels) < 0:
            raise DomainError("levels must be non-negative")
        if not max(self.levels) < self.ref_level <= brownian.MAX_LEVEL:
            raise DomainError(
                f"ref_level must exceed every level and be <= {brownian.MAX_LEVEL}, "
                f"got levels {self.levels} and ref_level {self.ref_level}"
            )
        if not self.schemes:
            raise DomainError("no schemes under test")
        if self.num_paths < 2:
            raise DomainError(f"num_paths must be >= 2, got {self.num_paths}")
        brownian._check_seed(self.seed)
        if self.error_norm not in ERROR_NORMS:
            raise DomainError(f"error_norm must be one of {ERROR_NORMS}")
        for kind, level in self._bem_entries():
            check_bem_step_size(self.params, self.step(level))

    def _bem_entries(self):
        if self.ref_scheme is SchemeKind.BEM:
            yield self.ref_scheme, self.ref_level
        if SchemeKind.BEM in self.schemes:
            for level in self.levels:
                yield SchemeKind.BEM, level

    @property
    def projection(self) -> ProjectionConfig:
        return ProjectionConfig(self.q, self.params.r)

    def step(self, level: int) -> float:
        return self.T / 2**level

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = dict(self.params.as_dict())
        out.update(
            q=self.q,
            T=self.T,
            levels=",".join(map(str, self.levels)),
            ref_level=self.ref_level,
            ref_scheme=self.ref_scheme.value,
            schemes=",".join(s.value for s in self.schemes),
            paths=self.num_paths,
            seed=self.seed,
            error_norm=self.error_norm,
        )
        return out


@dataclass(frozen=True)
class LevelResult:
    scheme: SchemeKind
    level: int
    h: float
    rmse: float
    wall_time: float


@dataclass(frozen=True)
class RateFit:
    rate: float
    residual: float


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    results: list[LevelResult]
    rates: dict[SchemeKind, RateFit] = field(default_factory=dict)

    def rmse(self, scheme: SchemeKind, level: int) -> float:
        for row in self.results:
            if row.scheme is scheme and row.level == level:
                return row.rmse
        raise KeyError((scheme, level))

    def rows(self, scheme: SchemeKind) -> list[LevelResult]:
        return [row for row in self.results if row.scheme is scheme]

    @property
    def schemes(self) -> list[SchemeKind]:
        seen: list[SchemeKind] = []
        for row in self.results:
            if row.scheme not in seen:
                seen.append(row.scheme)
        return seen


def fit_rate(points) -> tuple[float, float]:
    """Least-squares slope of log2(rmse) against log2(h).

    Returns ``(slope, residual)`` where residual is the root mean square of
    the fit residuals in log2 space.
    """
    points = list(points)
    if len(points) < 2:
        raise DomainError("fit_rate needs at least two points")
    h = np.array([p[0] for p in points], dtype=np.float64)
    e = np.array([p[1] for p in points], dtype=np.float64)
    if not (np.all(h > 0) and np.all(e > 0)):
        raise DomainError("step sizes and errors must be positive to fit a rate")
    x, y = np.log2(h), np.log2(e)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise DomainError("fit_rate needs at least two distinct step sizes")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = y.mean() - slope * x.mean()
    resid = y - (intercept + slope * x)
    return slope, float(np.sqrt(np.mean(resid**2)))


def _blocks(num_paths: int, size: int | None = None) -> list[range]:
    size = size or PATH_BLOCK
    return [range(a, min(a + size, num_paths)) for a in range(0, num_paths, size)]


def _map_blocks(fn, blocks, threads: int):
    if threads <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def _sweep(cfg: ExperimentConfig, pairs, threads: int, zero_noise: bool):
    """Squared errors and timings for each (scheme, level) pair.

    Returns ``(sq, times)`` with ``sq[(scheme, level)]`` an array of per-path
    squared errors in path order.
    """
    params, proj, L = cfg.params, cfg.projection, cfg.ref_level
    top = max(level for _, level in pairs)
    use_max = cfg.error_norm == "max"

    def run_block(block: range):
        n = 2**L
        if zero_noise:
            fine = np.zeros((n, len(block)))
        else:
            fine = brownian.generate_block(cfg.seed, block, L, cfg.T)
        try:
            ref = integrate_batch(
                params, proj, cfg.ref_scheme, fine, cfg.step(L),
                record_every=2 ** (L - top) if use_max else None,
            )
        except ConvergenceError as err:
            raise _with_context(err, cfg.ref_scheme, L, block) from err
        sq, times = {}, {}
        coarse_by_level = {}
        for scheme, level in pairs:
            if level not in coarse_by_level:
                coarse_by_level[level] = brownian.coarsen_increments(fine, L, level)
            coarse = coarse_by_level[level]
            t0 = time.perf_counter()
            try:
                out = integrate_batch(
                    params, proj, scheme, coarse, cfg.step(level),
                    record_every=1 if use_max else None,
                )
            except ConvergenceError as err:
                raise _with_context(err, scheme, level, block) from err
            times[scheme, level] = time.perf_counter() - t0
            if use_max:
                diff = out - ref[:: 2 ** (top - level)]
                sq[scheme, level] = np.max(diff * diff, axis=0)
            else:
                diff = out - ref
                sq[scheme, level] = diff * diff
        return sq, times

    parts = _map_blocks(run_block, _blocks(cfg.num_paths), threads)
    sq = {key: np.concatenate([p[0][key] for p in parts]) for key in pairs}
    times = {key: math.fsum(p[1][key] for p in parts) for key in pairs}
    return sq, times


def _with_context(err: ConvergenceError, scheme, level, block: range) -> ConvergenceError:
    paths = [block[i] for i in (err.path_indices or [])]
    return ConvergenceError(
        f"{scheme.value} at level {level}, step {err.step_index}, paths {paths}: {err}",
        step_index=err.step_index,
        path_indices=paths,
    )


def _rmse(sq: np.ndarray) -> float:
    # fsum is exactly rounded, hence independent of blocking and order
    return math.sqrt(math.fsum(sq.tolist()) / sq.size)


def run_strong_error(
    cfg: ExperimentConfig, *, threads: int = 1, zero_noise: bool = False
) -> ConvergenceReport:
    """Estimate the RMSE of every scheme at every level against the reference.

    ``zero_noise`` drives all paths with zero increments; it exists for
    testing against deterministic replays.
    """
    pairs = [(s, l) for s in cfg.schemes for l in cfg.levels]
    sq, times = _sweep(cfg, pairs, threads, zero_noise)
    results = [
        LevelResult(s, l, cfg.step(l), _rmse(sq[s, l]), times[s, l]) for s, l in pairs
    ]
    report = ConvergenceReport(cfg, results)
    if len(cfg.levels) >= 2:
        for scheme in cfg.schemes:
            rate, resid = fit_rate((row.h, row.rmse) for row in report.rows(scheme))
            report.rates[scheme] = RateFit(rate, resid)
    return report


def run_self_check(cfg: ExperimentConfig, *, threads: int = 1) -> ConvergenceReport:
    """Reference scheme against itself on the reference lattice; RMSE must be 0."""
    pair = (cfg.ref_scheme, cfg.ref_level)
    sq, times = _sweep(cfg, [pair], threads, zero_noise=False)
    row = LevelResult(pair[0], pair[1], cfg.step(pair[1]), _rmse(sq[pair]), times[pair])
    return ConvergenceReport(cfg, [row])


@dataclass(frozen=True)
class StressEntry:
    scheme: SchemeKind
    h: float
    steps: int
    min_state: float
    nonpositive: int

    @property
    def passed(self) -> bool:
        return self.nonpositive == 0


@dataclass(frozen=True)
class StressReport:
    T: float
    num_paths: int
    entries: list[StressEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def min_state(self) -> float:
        return min(e.min_state for e in self.entries)


def positivity_stress(
    params: ModelParams,
    q: float,
    h_list,
    num_paths: int,
    seed: int,
    *,
    schemes=(SchemeKind.SIPMM, SchemeKind.SIPEM),
    zero_noise: bool = False,
) -> StressReport:
    """Run the explicit schemes over [0, 16 max(h)] and record the smallest state.

    Any state that is not strictly positive (including NaN) is counted as a
    failure.
    """
    validate(params)
    proj = ProjectionConfig(q, params.r)
    h_list = [float(h) for h in h_list]
    if not h_list or min(h_list) <= 0:
        raise DomainError("step sizes must be positive")
    T = 16 * max(h_list)
    entries = []
    for h in h_list:
        N = round(T / h)
        if abs(N * h - T) > 1e-9 * T:
            raise DomainError(f"T = {T} is not an integer multiple of h = {h}")
        if zero_noise:
            dW = np.zeros((N, num_paths))
        else:
            dW = np.empty((N, num_paths))
            for m in range(num_paths):
                dW[:, m] = brownian.standard_normals(seed, m, N) * math.sqrt(h)
        for scheme in schemes:
            if scheme is SchemeKind.BEM:
                raise DomainError("positivity stress covers the explicit schemes only")
            step = sipmm_step if scheme is SchemeKind.SIPMM else sipem_step
            y = np.full(num_paths, float(params.x0))
            lowest = float(params.x0)
            bad = 0
            for n in range(N):
                y = step(params, proj, y, h, dW[n])
                bad += int(np.count_nonzero(~(y > 0)))
                if num_paths:
                    lowest = min(lowest, float(np.min(y)))
            entries.append(StressEntry(scheme, h, N, lowest, bad))
    return StressReport(T, num_paths, entries)


def time_schemes(
    cfg: ExperimentConfig, *, num_paths: int | None = None, repeats: int = 1
) -> dict[tuple[SchemeKind, int], float]:
    """Single-threaded wall time of the full path sweep per (scheme, level).

    Lattice generation is excluded.  With ``repeats > 1`` the minimum over
    repetitions is reported.
    """
    M = cfg.num_paths if num_paths is None else int(num_paths)
    top = max(cfg.levels)
    lattices = [
        brownian.generate_block(cfg.seed, block, top, cfg.T) for block in _blocks(M)
    ]
    out = {}
    for scheme in cfg.schemes:
        for level in cfg.levels:
            coarse = [brownian.coarsen_increments(f, top, level) for f in lattices]
            best = math.inf
            for _ in range(max(1, repeats)):
                t0 = time.perf_counter()
                for inc in coarse:
                    integrate_batch(cfg.params, cfg.projection, scheme, inc, cfg.step(level))
                best = min(best, time.perf_counter() - t0)
            out[scheme, level] = best
    return out
