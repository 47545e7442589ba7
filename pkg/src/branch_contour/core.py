"""Model parameters for branching with multiple simultaneous births.

An individual lives an Exp(mu) lifetime and, while alive, triggers birth
events at rate lambda; each event creates a batch of Theta >= 1 children,
Theta drawn from a finite-support law. Everything is killed at a horizon
gamma. The rescaled family (index N) uses

    lambda_N = N sigma^2 / (2 a) + alpha / a,
    mu_N     = N sigma^2 / 2 + beta,

so that a lambda_N - mu_N = alpha - beta exactly, and the derived constants

    a      = E Theta,
    zeta^2 = Var Theta,
    delta  = (a + a^2 + zeta^2) / (2 a),
    kappa  = sigma sqrt(delta),
    nu     = kappa sqrt(delta),

drive the diffusion and height-process limits.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .rng import RngStream

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class BranchingConstants:
    """Constants derived from a batch-size law."""

    mean: float        # a
    variance: float    # zeta^2
    delta: float       # (a + a^2 + zeta^2) / (2a)

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean**2


class OffspringLaw:
    """A finite-support batch-size law on the integers >= 1.

    The stored pmf is validated (positive masses summing to one within
    1e-12); sampling uses the inverse CDF on one uniform per draw so that
    scripted-uniform tests and compiled kernels share the convention.
    """

    def __init__(self, pmf: Mapping[int, float]):
        if not pmf:
            raise ValueError("offspring pmf must be non-empty")
        cleaned: dict[int, float] = {}
        for k, p in pmf.items():
            kk = int(k)
            if kk != k or kk < 1:
                raise ValueError(f"batch sizes must be integers >= 1, got {k!r}")
            if not (math.isfinite(p) and p > 0):
                raise ValueError(f"pmf values must be positive and finite, got p({k})={p!r}")
            if kk in cleaned:
                raise ValueError(f"duplicate batch size {kk}")
            cleaned[kk] = float(p)
        total = math.fsum(cleaned.values())
        if abs(total - 1.0) > _PROB_TOL:
            raise ValueError(f"pmf must sum to 1 within {_PROB_TOL}, got {total!r}")
        self.pmf = dict(sorted(cleaned.items()))
        self.support = np.array(list(self.pmf.keys()), dtype=np.int64)
        self.probs = np.array(list(self.pmf.values()), dtype=np.float64)
        self._cum = np.cumsum(self.probs)
        self._cum[-1] = 1.0  # guard the top bin against fsum dust

    # -- constructors ------------------------------------------------------

    @staticmethod
    def deterministic(k: int) -> "OffspringLaw":
        return OffspringLaw({k: 1.0})

    @staticmethod
    def two_point(k1: int, k2: int, p1: float) -> "OffspringLaw":
        if not 0 < p1 < 1:
            raise ValueError(f"p1 must lie strictly in (0, 1), got {p1}")
        return OffspringLaw({k1: p1, k2: 1.0 - p1})

    @staticmethod
    def truncated_geometric(q: float, k_max: int) -> "OffspringLaw":
        """P(k) proportional to q^(k-1) on {1, ..., k_max}."""
        if not 0 < q < 1:
            raise ValueError(f"q must lie strictly in (0, 1), got {q}")
        if k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {k_max}")
        weights = [q ** (k - 1) for k in range(1, k_max + 1)]
        z = math.fsum(weights)
        return OffspringLaw({k: w / z for k, w in zip(range(1, k_max + 1), weights)})

    # -- derived constants -------------------------------------------------

    @property
    def constants(self) -> BranchingConstants:
        a = float(np.dot(self.support, self.probs))
        zeta2 = float(np.dot((self.support - a) ** 2, self.probs))
        delta = (a + a * a + zeta2) / (2.0 * a)
        return BranchingConstants(mean=a, variance=zeta2, delta=delta)

    @property
    def mean(self) -> float:
        return self.constants.mean

    def sample(self, rng: RngStream, size=None):
        """Batch sizes via inverse CDF; one uniform consumed per draw."""
        u = rng.uniform(size)
        idx = np.searchsorted(self._cum, u, side="right")
        out = self.support[idx]
        return int(out) if size is None else out

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"pmf": {str(k): p for k, p in self.pmf.items()}}, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "OffspringLaw":
        data = json.loads(text)
        if not isinstance(data, dict) or "pmf" not in data:
            raise ValueError("offspring JSON must be an object with a 'pmf' key")
        return OffspringLaw({int(k): float(p) for k, p in data["pmf"].items()})

    def __eq__(self, other) -> bool:
        return isinstance(other, OffspringLaw) and self.pmf == other.pmf

    def __repr__(self) -> str:
        return f"OffspringLaw({self.pmf})"


def derive_constants(law: OffspringLaw | Mapping[int, float]) -> BranchingConstants:
    """(a, zeta^2, delta) for a batch-size law or raw pmf."""
    if not isinstance(law, OffspringLaw):
        law = OffspringLaw(law)
    return law.constants


@dataclass(frozen=True)
class ModelParams:
    """Unscaled branching parameters: batch law, event rate, death rate, horizon.

    An infinite horizon is only meaningful when the mean growth rate
    a*birth_rate - death_rate is negative (otherwise trees are infinite with
    positive probability), so gamma=inf is gated on that.
    """

    offspring: OffspringLaw
    birth_rate: float
    death_rate: float
    gamma: float = math.inf

    def __post_init__(self):
        if not (math.isfinite(self.birth_rate) and self.birth_rate >= 0):
            raise ValueError(f"birth_rate must be finite and >= 0, got {self.birth_rate}")
        if not (math.isfinite(self.death_rate) and self.death_rate > 0):
            raise ValueError(f"death_rate must be finite and > 0, got {self.death_rate}")
        if self.gamma != math.inf and not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive or inf, got {self.gamma}")
        if self.gamma == math.inf and self.growth_rate >= 0:
            raise ValueError(
                "gamma=inf requires a*birth_rate < death_rate "
                f"(got mean growth rate {self.growth_rate})"
            )

    @property
    def growth_rate(self) -> float:
        """a*lambda - mu: the exponential rate of the mean population."""
        return self.offspring.mean * self.birth_rate - self.death_rate

    @property
    def criticality(self) -> str:
        g = self.growth_rate
        return "critical" if g == 0 else ("subcritical" if g < 0 else "supercritical")


@dataclass(frozen=True)
class ScalingParams:
    """The rescaled family: raw inputs plus every derived constant.

    initial_count is floor(N x); the rescaled process starts from
    initial_count / N, which differs from x by at most 1/N.
    """

    n_scale: int
    x: float
    sigma: float
    alpha: float
    beta: float
    offspring: OffspringLaw
    constants: BranchingConstants = field(init=False)

    def __post_init__(self):
        if int(self.n_scale) != self.n_scale or self.n_scale < 1:
            raise ValueError(f"n_scale must be an integer >= 1, got {self.n_scale}")
        if not (math.isfinite(self.x) and self.x >= 0):
            raise ValueError(f"x must be finite and >= 0, got {self.x}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be finite and > 0, got {self.sigma}")
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "constants", self.offspring.constants)

    # -- derived rates and units --------------------------------------------

    @property
    def birth_rate(self) -> float:
        """lambda_N = N sigma^2 / (2a) + alpha / a."""
        a = self.constants.mean
        return self.n_scale * self.sigma**2 / (2.0 * a) + self.alpha / a

    @property
    def death_rate(self) -> float:
        """mu_N = N sigma^2 / 2 + beta."""
        return self.n_scale * self.sigma**2 / 2.0 + self.beta

    @property
    def drift(self) -> float:
        """alpha - beta == a lambda_N - mu_N, exactly."""
        return self.alpha - self.beta

    @property
    def kappa(self) -> float:
        return self.sigma * math.sqrt(self.constants.delta)

    @property
    def nu(self) -> float:
        return self.kappa * math.sqrt(self.constants.delta)

    @property
    def slope(self) -> float:
        """Contour slope of the rescaled exploration: +-2N."""
        return 2.0 * self.n_scale

    @property
    def local_time_unit(self) -> float:
        """Normalization 4 / (N kappa^2 delta) turning crossing counts into local time."""
        return 4.0 / (self.n_scale * self.kappa**2 * self.constants.delta)

    @property
    def initial_count(self) -> int:
        return int(math.floor(self.n_scale * self.x))

    @property
    def initial_level(self) -> float:
        return self.initial_count / self.n_scale

    def model_params(self, gamma: float = math.inf) -> ModelParams:
        return ModelParams(self.offspring, self.birth_rate, self.death_rate, gamma)

    # -- serialization -------------------------------------------------------

    def to_json_dict(self) -> dict:
        c = self.constants
        return {
            "n_scale": self.n_scale,
            "x": self.x,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "beta": self.beta,
            "offspring": {str(k): p for k, p in self.offspring.pmf.items()},
            "derived": {
                "batch_mean": c.mean,
                "batch_variance": c.variance,
                "delta": c.delta,
                "birth_rate": self.birth_rate,
                "death_rate": self.death_rate,
                "kappa": self.kappa,
                "nu": self.nu,
                "slope": self.slope,
                "local_time_unit": self.local_time_unit,
                "initial_count": self.initial_count,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(data: Mapping) -> "ScalingParams":
        return ScalingParams(
            n_scale=int(data["n_scale"]),
            x=float(data["x"]),
            sigma=float(data["sigma"]),
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            offspring=OffspringLaw({int(k): float(p) for k, p in data["offspring"].items()}),
        )
