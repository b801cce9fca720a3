"""Monte Carlo estimation of the familywise error rate.

Data models draw evidence in chunks from independent random substreams of
one master seed, so a given ``(model, reps, seed)`` always produces the same
estimate regardless of how the replications are grouped internally.

The module also carries a deliberately invalid procedure, see
:func:`counterexample_procedure`. Its critical values satisfy the union
bound at every single step but are not monotone, and on a suitable data
model its familywise error rate is ``2 * level - 2 * eps``, well above
``level``. It is a negative control and is not part of the procedure catalog.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from ._bits import full, to_mask
from .core import Schedule
from .logic import HypothesisUniverse, LogicalStructure

CHUNK = 10_000


class DataModel:
    """Base class: ``n`` hypotheses, a true set, and a batch sampler."""

    kind = "model"
    evidence = "p-values"
    n: int
    true_mask: int

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


def _true_mask(n, true):
    if true is None:
        return full(n)
    mask = to_mask(true)
    if mask >> n:
        raise ValueError("true set refers to hypotheses outside the universe")
    return mask


class IndependentUniform(DataModel):
    """Independent p-values: uniform when true, uniform on ``(0, b_H)`` when false."""

    kind = "independent-uniform"

    def __init__(self, n: int, true: Sequence[int] | int | None = None, b: float | Sequence[float] = 0.5):
        if n < 1:
            raise ValueError("need at least one hypothesis")
        self.n = n
        self.true_mask = _true_mask(n, true)
        self.b = np.broadcast_to(np.asarray(b, dtype=float), (n,)).copy()
        if np.any(self.b <= 0) or np.any(self.b >= 1):
            raise ValueError("false-hypothesis scales b must lie strictly between 0 and 1")

    def draw(self, rng, size):
        U = rng.random((size, self.n))
        scale = np.where(((self.true_mask >> np.arange(self.n)) & 1).astype(bool), 1.0, self.b)
        return U * scale

    def describe(self):
        return {"kind": self.kind, "n": self.n, "true": _ids(self.true_mask), "b": self.b.tolist()}


class EquicorrelatedNormal(DataModel):
    """p-values from equicorrelated normal z-scores ``Z_H = shift_H + noise``.

    Hypotheses with zero shift are true. One-sided p-values are
    ``1 - Phi(Z)``; two-sided ones ``2 * (1 - Phi(|Z|))``.
    """

    kind = "equicorrelated-normal"

    def __init__(self, n: int, rho: float, shift: Sequence[float] | float = 0.0, one_sided: bool = True):
        if n < 1:
            raise ValueError("need at least one hypothesis")
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        self.n = n
        self.rho = float(rho)
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (n,)).copy()
        self.one_sided = one_sided
        self.true_mask = to_mask(np.flatnonzero(self.shift == 0).tolist())

    def draw(self, rng, size):
        common = rng.standard_normal((size, 1))
        own = rng.standard_normal((size, self.n))
        Z = self.shift + np.sqrt(self.rho) * common + np.sqrt(1.0 - self.rho) * own
        if self.one_sided:
            return stats.norm.sf(Z)
        return 2.0 * stats.norm.sf(np.abs(Z))

    def describe(self):
        return {
            "kind": self.kind,
            "n": self.n,
            "rho": self.rho,
            "shift": self.shift.tolist(),
            "one_sided": self.one_sided,
        }


class SignSymmetricNormal(DataModel):
    """Data matrices for resampling tests: ``n_obs`` rows of equicorrelated normals.

    Column ``H`` has mean ``shift_H``; columns with zero mean are true nulls
    and are symmetric about zero jointly, so sign flips of whole rows leave
    their joint law unchanged.
    """

    kind = "sign-symmetric-normal"
    evidence = "data"

    def __init__(self, n_obs: int, n: int, rho: float = 0.0, shift: Sequence[float] | float = 0.0):
        if n_obs < 1 or n < 1:
            raise ValueError("need at least one observation and one hypothesis")
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        self.n_obs = n_obs
        self.n = n
        self.rho = float(rho)
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), (n,)).copy()
        if np.any(self.shift < 0):
            raise ValueError("shifts must be nonnegative")
        self.true_mask = to_mask(np.flatnonzero(self.shift == 0).tolist())

    def draw(self, rng, size):
        common = rng.standard_normal((size, self.n_obs, 1))
        own = rng.standard_normal((size, self.n_obs, self.n))
        return self.shift + np.sqrt(self.rho) * common + np.sqrt(1.0 - self.rho) * own

    def describe(self):
        return {
            "kind": self.kind,
            "n_obs": self.n_obs,
            "n": self.n,
            "rho": self.rho,
            "shift": self.shift.tolist(),
        }


def _check_window(alpha, eps, t):
    slack = 1e-12
    if not 0 < alpha <= 0.5:
        raise ValueError(f"need 0 < alpha <= 1/2, got {alpha}")
    if not 0 < eps < alpha / 2:
        raise ValueError(f"need 0 < eps < alpha/2, got eps={eps}")
    if t is not None and not 2 * eps - slack <= t <= eps / alpha + slack:
        raise ValueError(f"need 2*eps <= t <= eps/alpha, i.e. {2 * eps} <= t <= {eps / alpha}; got {t}")


class CounterexampleA(DataModel):
    """Four statistics driven by one uniform ``U``: ``(tU, t(1-U), U, 1-U)``.

    The first two hypotheses are false, the last two true.
    """

    kind = "counterexample"

    def __init__(self, alpha: float, eps: float, t: float):
        _check_window(alpha, eps, t)
        self.alpha, self.eps, self.t = float(alpha), float(eps), float(t)
        self.n = 4
        self.true_mask = 0b1100

    def draw(self, rng, size):
        U = rng.random(size)
        return np.column_stack([self.t * U, self.t * (1 - U), U, 1 - U])

    def describe(self):
        return {"kind": self.kind, "alpha": self.alpha, "eps": self.eps, "t": self.t}


MODELS = {
    m.kind: m for m in (IndependentUniform, EquicorrelatedNormal, SignSymmetricNormal, CounterexampleA)
}


def model_from_dict(config: dict) -> DataModel:
    """Build a model from ``{"kind": ..., **parameters}``."""
    config = dict(config)
    try:
        cls = MODELS[config.pop("kind")]
    except KeyError as err:
        raise ValueError(f"unknown or missing model kind {err}; known: {sorted(MODELS)}") from None
    return cls(**config)


def _ids(mask):
    return [h for h in range(mask.bit_length()) if mask >> h & 1]


@dataclass(frozen=True)
class FwerEstimate:
    """Monte Carlo familywise error rate with a 95% Wilson interval."""

    replications: int
    false_rejection_events: int
    estimate: float
    wilson95: tuple[float, float]
    level: float
    seed: int | None

    @property
    def se(self) -> float:
        """Binomial standard error at the nominal level, ``sqrt(level (1 - level) / reps)``."""
        return float(np.sqrt(self.level * (1 - self.level) / self.replications))

    def within(self, bound: float, n_se: float = 3.0) -> bool:
        return self.estimate <= bound + n_se * self.se

    def to_dict(self) -> dict:
        out = asdict(self)
        out["wilson95"] = list(self.wilson95)
        out["se"] = self.se
        return out


def _check_sizes(procedure, model):
    if hasattr(procedure, "group"):
        if model.evidence != "data" or model.n_obs != procedure.group.n:
            raise ValueError("resampling procedures need a data model whose rows match the group")
    elif model.evidence != "p-values":
        raise ValueError(f"{model.kind} draws data matrices, not p-values")
    elif procedure.n != model.n:
        raise ValueError(f"model has {model.n} hypotheses, procedure has {procedure.n}")


def estimate_fwer(procedure, model: DataModel, reps: int, level: float, seed: int | None = 0) -> FwerEstimate:
    """Fraction of replications in which the procedure rejects a true hypothesis.

    ``procedure`` needs a ``run_batch(evidence_batch, level)`` method
    returning final rejected masks. For families extended by closed testing
    or partitioning the count is over the extended family.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"level must lie in [0, 1], got {level}")
    _check_sizes(procedure, model)
    true_mask = model.true_mask
    if hasattr(procedure, "true_mask"):
        true_mask = procedure.true_mask(true_mask)
    n_chunks = -(-reps // CHUNK)
    streams = np.random.SeedSequence(seed).spawn(n_chunks)
    events = 0
    for c, ss in enumerate(streams):
        size_c = min(CHUNK, reps - c * CHUNK)
        batch = model.draw(np.random.default_rng(ss), size_c)
        finals = np.asarray(procedure.run_batch(batch, level), dtype=np.int64)
        events += int(np.count_nonzero(finals & true_mask))
    ci = stats.binomtest(events, reps).proportion_ci(0.95, method="wilson")
    return FwerEstimate(reps, events, events / reps, (float(ci.low), float(ci.high)), level, seed)


class NeverReject:
    """Procedure that never rejects anything."""

    name = "never"

    def __init__(self, n: int):
        self.n = n

    def run_batch(self, evidence_batch, level):
        return np.zeros(len(evidence_batch), dtype=np.int64)


class SingleStepBonferroni(Schedule):
    """``alpha_H(R) = level / n`` regardless of ``R``."""

    name = "bonferroni"

    def alpha(self, h, rejected, level, evidence=None):
        return level / self.n

    def inverse(self, h, rejected, p, evidence=None):
        return min(1.0, p * self.n)


COUNTEREXAMPLE_LABELS = ("J", "K", "J'", "K'")


class CounterexampleSchedule(Schedule):
    """Gatekeeping-type schedule on ``J, K`` (primary) and ``J', K'`` (secondary).

    Primary hypotheses are tested at ``eps`` throughout. ``J'`` is tested at
    ``alpha - eps`` when ``J`` but not ``K`` is rejected, at ``alpha / 2``
    when both are, and at 0 otherwise; ``K'`` symmetrically. Not monotone.
    """

    name = "counterexample-a"
    negative_control = True

    def __init__(self, alpha: float = 0.4, eps: float = 0.1):
        _check_window(alpha, eps, None)
        super().__init__(4)
        self.a, self.eps = float(alpha), float(eps)

    def _value(self, h, rejected):
        if h < 2:
            return self.eps
        own, other = (0, 1) if h == 2 else (1, 0)
        if rejected >> own & 1:
            return self.a / 2 if rejected >> other & 1 else self.a - self.eps
        return 0.0

    def alpha(self, h, rejected, level, evidence=None):
        # the table is stated for one fixed level; it is rescaled for others
        return self._value(h, rejected) * level / self.a

    def inverse(self, h, rejected, p, evidence=None):
        v = self._value(h, rejected)
        return 1.0 if v == 0 else min(1.0, p * self.a / v)


def counterexample_procedure(alpha: float = 0.4, eps: float = 0.1):
    """The negative-control schedule and its (unrestricted) structure."""
    universe = HypothesisUniverse(COUNTEREXAMPLE_LABELS)
    return CounterexampleSchedule(alpha, eps), LogicalStructure.free(universe)


def counterexample_fwer(
    alpha: float = 0.4, eps: float = 0.1, t: float = 0.22, reps: int = 100_000, seed: int | None = 0
) -> FwerEstimate:
    schedule, _ = counterexample_procedure(alpha, eps)
    return estimate_fwer(schedule, CounterexampleA(alpha, eps, t), reps, alpha, seed)
