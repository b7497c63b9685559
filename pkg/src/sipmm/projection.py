"""Step-size dependent corrective mappings applied to the state before the
explicit coefficient evaluations.

The shipped mapping is the truncation ``P_h(x) = min(1, h**-q / |x|) x``,
which on the positive half-line reduces to ``min(x, h**-q)``.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


class CorrectiveMapping(abc.ABC):
    """A map D -> D depending on the step size h.

    Implementations must satisfy |phi(x)| <= |x|, a displacement bound
    |x - phi(x)| = O(h (1 + |x|^(2r+1))), a (1 + L h) Lipschitz bound, and
    keep h |f(phi(x)) - f(phi(y))|^2 bounded by a multiple of |x - y|^2.
    """

    name: str

    @abc.abstractmethod
    def apply(self, h: float, x):
        """Apply the mapping; no argument checking."""

    def __call__(self, h: float, x):
        if not np.all(np.asarray(h) > 0):
            raise DomainError(f"step size must be positive, got {h!r}")
        xa = np.asarray(x, dtype=np.float64)
        if not np.all(xa > 0):
            raise DomainError("projection argument must be strictly positive")
        out = self.apply(h, xa)
        return float(out) if np.ndim(out) == 0 else out

    def describe(self) -> dict[str, object]:
        return {"name": self.name}


def admissible_exponents(r: float) -> tuple[float, float]:
    """Closed interval of truncation exponents valid for growth exponent r."""
    return 1.0 / (2.0 * r), 1.0 / (2.0 * r - 2.0)


def default_exponent(r: float) -> float:
    """Largest admissible exponent 1/(2r-2), i.e. the weakest truncation."""
    if not r > 1:
        raise DomainError(f"r must be > 1, got {r!r}")
    return 1.0 / (2.0 * r - 2.0)


@dataclass(frozen=True)
class ProjectionConfig(CorrectiveMapping):
    """Truncation ``x -> min(x, h**-q)`` with q in [1/(2r), 1/(2r-2)]."""

    q: float
    r: float
    name = "truncation"

    def __post_init__(self):
        if not self.r > 1:
            raise DomainError(f"r must be > 1, got {self.r!r}")
        lo, hi = admissible_exponents(self.r)
        # 1e-12 slack so decimal literals such as q=0.1666666666666667 pass
        if not (lo - 1e-12 <= self.q <= hi + 1e-12):
            raise DomainError(
                f"q must lie in [1/(2r), 1/(2r-2)] = [{lo!r}, {hi!r}], got {self.q!r}"
            )

    @classmethod
    def default(cls, r: float) -> "ProjectionConfig":
        return cls(default_exponent(r), r)

    def threshold(self, h: float) -> float:
        """The cap h**-q."""
        return h ** -self.q

    def apply(self, h, x):
        return np.minimum(x, self.threshold(h))

    def describe(self):
        return {"name": self.name, "q": self.q, "r": self.r}


def project(cfg: CorrectiveMapping, h: float, x):
    return cfg(h, x)
