"""One-step maps and path integrators.

SIPMM
    Semi-implicit projected Milstein method.  With ``p = phi_h(y)``,

        A = p + (-a_0 + a_1 p - a_2 p^r) h + g(p) dW + (dW^2 - h)/2 * g_hat(p)

    the next state is the positive root of ``Y^2 - A Y - a_m1 h = 0``.
SIPEM
    The same construction without the ``(dW^2 - h)/2 * g_hat(p)`` term; a
    strong order 1/2 comparator.
BEM
    Fully drift-implicit Euler: the root of

        G(Y) = Y - y - h (a_m1/Y - a_0 + a_1 Y - a_2 Y^r) - g(y) dW,

    found by safeguarded Newton iteration.  Requires ``h < 1/a_1``.

Every step function is elementwise over numpy arrays, so one call advances a
whole batch of independent paths.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, DomainError, StepSizeError
from .model import ModelParams, power
from .projection import CorrectiveMapping

BEM_LOWER = 1e-12
BEM_MAX_ITER = 200
BEM_RTOL = 1e-12
_ULPS = 4 * np.finfo(np.float64).eps


class SchemeKind(enum.Enum):
    SIPMM = "SIPMM"
    SIPEM = "SIPEM"
    BEM = "BEM"

    @classmethod
    def parse(cls, name: str) -> "SchemeKind":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise DomainError(
                f"unknown scheme {name!r}; expected one of "
                + ", ".join(k.name for k in cls)
            ) from None


class StepInput(NamedTuple):
    y: float
    h: float
    dW: float

    def check(self) -> "StepInput":
        if not self.y > 0:
            raise DomainError(f"state must be positive, got {self.y!r}")
        if not self.h > 0:
            raise DomainError(f"step size must be positive, got {self.h!r}")
        return self


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    y: np.ndarray

    @property
    def terminal(self) -> float:
        return float(self.y[-1])


def positive_root(A, c):
    """Positive root of ``Y^2 - A Y - c = 0`` for c > 0.

    The conjugate form is used for A < 0, where ``A + sqrt(A^2 + 4c)`` would
    cancel.  ``hypot`` keeps ``A^2`` from overflowing.
    """
    A = np.asarray(A, dtype=np.float64)
    disc = np.hypot(A, 2.0 * np.sqrt(c))
    with np.errstate(divide="ignore", invalid="ignore"):
        neg = 2.0 * c / (disc - A)
    out = np.where(A >= 0, 0.5 * (A + disc), neg)
    return float(out) if out.ndim == 0 else out


def explicit_part(params: ModelParams, cfg: CorrectiveMapping, y, h, dW, milstein=True):
    """The explicit right-hand side A of the semi-implicit quadratic."""
    p = cfg.apply(h, y)
    theta = -params.alpha_0 + params.alpha_1 * p - params.alpha_2 * power(p, params.r)
    A = p + theta * h + params.sigma * power(p, params.rho) * dW
    if milstein:
        A = A + milstein_term(params, p, h, dW)
    return A


def milstein_term(params: ModelParams, p, h, dW):
    """``(dW^2 - h)/2 * g_hat(p)`` for an already projected state p."""
    return 0.5 * (dW * dW - h) * (params.rho * params.sigma**2 * power(p, 2 * params.rho - 1))


def _semi_implicit(params, cfg, y, h, dW, milstein):
    A = explicit_part(params, cfg, y, h, dW, milstein)
    return positive_root(A, params.alpha_m1 * h)


def sipmm_step(params: ModelParams, cfg: CorrectiveMapping, y, h, dW):
    return _semi_implicit(params, cfg, y, h, dW, True)


def sipem_step(params: ModelParams, cfg: CorrectiveMapping, y, h, dW):
    return _semi_implicit(params, cfg, y, h, dW, False)


def check_bem_step_size(params: ModelParams, h: float) -> None:
    h_max = float(np.max(h))
    if not h_max * params.alpha_1 < 1:
        raise StepSizeError(
            f"BEM needs h < 1/alpha_1 = {1 / params.alpha_1!r}, got h = {h_max!r}"
        )


def bem_residual(params: ModelParams, Y, y, h, dW):
    """G(Y) for the backward Euler equation."""
    drift = (
        params.alpha_m1 / Y
        - params.alpha_0
        + params.alpha_1 * Y
        - params.alpha_2 * power(Y, params.r)
    )
    return Y - y - h * drift - params.sigma * power(y, params.rho) * dW


def _bem_slope(params, Y, h):
    return (
        1.0
        + h * params.alpha_m1 / (Y * Y)
        - h * params.alpha_1
        + h * params.alpha_2 * params.r * power(Y, params.r - 1)
    )


def bem_step(params: ModelParams, y, h, dW, *, max_iter: int = BEM_MAX_ITER):
    """Backward Euler step, solved to ``|G(Y)| <= 1e-12 max(1, |Y|)``.

    Newton from the current state, with every iterate kept inside a bracket
    [lo, hi] on which G changes sign; a step that leaves the bracket is
    replaced by bisection (geometric while the bracket spans decades).
    """
    check_bem_step_size(params, h)
    scalar = np.ndim(y) == 0 and np.ndim(dW) == 0
    y = np.asarray(y, dtype=np.float64)
    dW = np.asarray(dW, dtype=np.float64)
    y, dW = np.broadcast_arrays(y, dW)

    noise = params.sigma * power(y, params.rho) * dW
    lo = np.full(y.shape, BEM_LOWER)
    hi = y + np.abs(noise) + h * params.alpha_m1 / BEM_LOWER + 1.0
    # G(lo) < 0 always holds for realistic h; G(hi) > 0 is enforced by doubling.
    for _ in range(64):
        short = bem_residual(params, hi, y, h, dW) <= 0
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)

    Y = y.copy()
    # a Newton correction below a few ulps means Y is the root to working
    # precision even when G cannot be evaluated below the tolerance
    stalled = np.zeros(y.shape, dtype=bool)
    for _ in range(max_iter):
        G = bem_residual(params, Y, y, h, dW)
        done = stalled | (np.abs(G) <= BEM_RTOL * np.maximum(1.0, np.abs(Y)))
        if done.all():
            break
        lo = np.where(G < 0, Y, lo)
        hi = np.where(G > 0, Y, hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nxt = Y - G / _bem_slope(params, Y, h)
        outside = ~((nxt > lo) & (nxt < hi))
        stalled = (np.abs(nxt - Y) <= _ULPS * np.abs(Y)) | (hi - lo <= _ULPS * hi)
        mid = np.where(hi > 4.0 * lo, np.sqrt(lo * hi), 0.5 * (lo + hi))
        nxt = np.where(outside, mid, nxt)
        Y = np.where(done, Y, nxt)
    else:
        G = bem_residual(params, Y, y, h, dW)
        done = stalled | (np.abs(G) <= BEM_RTOL * np.maximum(1.0, np.abs(Y)))
        if not done.all():
            bad = np.flatnonzero(~done.ravel())
            raise ConvergenceError(
                f"BEM Newton solve did not converge in {max_iter} iterations "
                f"for {bad.size} input(s)",
                path_indices=bad.tolist(),
            )
    return float(Y) if scalar else Y


def step(kind: SchemeKind, params: ModelParams, cfg: CorrectiveMapping, inp: StepInput):
    """Advance one scalar state by one step of the given scheme."""
    inp.check()
    if kind is SchemeKind.SIPMM:
        return sipmm_step(params, cfg, inp.y, inp.h, inp.dW)
    if kind is SchemeKind.SIPEM:
        return sipem_step(params, cfg, inp.y, inp.h, inp.dW)
    return bem_step(params, inp.y, inp.h, inp.dW)


def _stepper(kind: SchemeKind, params, cfg):
    if kind is SchemeKind.SIPMM:
        return lambda y, h, dW: sipmm_step(params, cfg, y, h, dW)
    if kind is SchemeKind.SIPEM:
        return lambda y, h, dW: sipem_step(params, cfg, y, h, dW)
    return lambda y, h, dW: bem_step(params, y, h, dW)


def _num_steps(n_increments: int, h: float, T: float) -> int:
    if not (h > 0 and T >= 0):
        raise DomainError("h must be positive and T non-negative")
    N = round(T / h)
    if abs(N * h - T) > 1e-9 * max(T, h) or N != n_increments:
        raise DomainError(
            f"need exactly T/h = {T / h!r} increments, got {n_increments}"
        )
    return N


def integrate(
    params: ModelParams,
    cfg: CorrectiveMapping,
    kind: SchemeKind,
    increments,
    h: float,
    T: float,
) -> Trajectory:
    """Run one path on the uniform grid t_n = n h, n = 0..N, with N = T/h."""
    increments = np.asarray(increments, dtype=np.float64)
    N = _num_steps(increments.size, h, T)
    if kind is SchemeKind.BEM:
        check_bem_step_size(params, h)
    advance = _stepper(kind, params, cfg)
    y = np.empty(N + 1)
    y[0] = params.x0
    for n in range(N):
        try:
            y[n + 1] = advance(y[n], h, increments[n])
        except ConvergenceError as err:
            err.step_index = n
            raise
    return Trajectory(t=np.arange(N + 1) * h, y=y)


def integrate_batch(
    params: ModelParams,
    cfg: CorrectiveMapping,
    kind: SchemeKind,
    increments: np.ndarray,
    h: float,
    record_every: int | None = None,
) -> np.ndarray:
    """Integrate many paths at once.

    Args:
        increments: array of shape (N, B); column b drives path b.
        record_every: if given, also return the states at every
            ``record_every``-th grid point (including t=0 and t=T).

    Returns:
        terminal states of shape (B,), or shape (N // record_every + 1, B)
        when ``record_every`` is set.
    """
    N, B = increments.shape
    if kind is SchemeKind.BEM:
        check_bem_step_size(params, h)
    advance = _stepper(kind, params, cfg)
    y = np.full(B, float(params.x0))
    rows = [y] if record_every else None
    for n in range(N):
        try:
            y = advance(y, h, increments[n])
        except ConvergenceError as err:
            err.step_index = n
            raise
        if record_every and (n + 1) % record_every == 0:
            rows.append(y)
    if record_every:
        return np.stack(rows)
    return y
