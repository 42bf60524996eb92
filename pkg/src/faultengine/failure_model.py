"""Three-state device failure model: Active, Transient failure, Permanent failure.

Rates per tick: ``alpha`` A->T (1/MTTF), ``beta`` T->A (1/MTTR), ``gamma`` A->P
(1/MLT).  Given ``t`` consecutive failed observations the probability that the
failure is permanent is

    G(t) = gamma / (gamma + alpha * S(t))

where ``S`` is the survival function of the recovery time: ``exp(-(t/lam)**k)``
for a Weibull recovery, ``exp(-beta*t)`` for an exponential one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .alarmlog import AlarmLog
from .errors import ConvergenceError, DegenerateSampleError, InsufficientDataError

__all__ = [
    "DEFAULT_PERMANENT_AFTER",
    "DEFAULT_THRESHOLD",
    "DeviceFit",
    "FailureClassification",
    "FailureStats",
    "IntervalKind",
    "MarkovRates",
    "Verdict",
    "WeibullParams",
    "classify_failure",
    "extract_recovery_times",
    "fit_devices",
    "fit_weibull",
    "g_transient_exponential",
    "g_transient_weibull",
    "rates_from_stats",
    "recovery_probability",
    "stats_from_log",
    "update_stats",
]

DEFAULT_THRESHOLD = 0.5
# ALARM runs longer than this many ticks are labelled permanent failures.
DEFAULT_PERMANENT_AFTER = 25


class IntervalKind(str, enum.Enum):
    UP = "up"
    RECOVERY = "recovery"
    LIFETIME = "lifetime"


class Verdict(str, enum.Enum):
    PERMANENT = "Permanent"
    TRANSIENT = "Transient"


def _positive_finite(name: str, value: float) -> float:
    value = float(value)
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"{name} must be positive and finite, got {value!r}")
    return value


@dataclass(frozen=True)
class FailureStats:
    """Running (count, sum) pairs; O(1) state per device."""

    up_count: int = 0
    up_sum: float = 0.0
    recovery_count: int = 0
    recovery_sum: float = 0.0
    lifetime_count: int = 0
    lifetime_sum: float = 0.0

    @property
    def mttf(self) -> float | None:
        return self.up_sum / self.up_count if self.up_count else None

    @property
    def mttr(self) -> float | None:
        return self.recovery_sum / self.recovery_count if self.recovery_count else None

    @property
    def mlt(self) -> float | None:
        return self.lifetime_sum / self.lifetime_count if self.lifetime_count else None

    def __add__(self, other: "FailureStats") -> "FailureStats":
        return FailureStats(
            self.up_count + other.up_count,
            self.up_sum + other.up_sum,
            self.recovery_count + other.recovery_count,
            self.recovery_sum + other.recovery_sum,
            self.lifetime_count + other.lifetime_count,
            self.lifetime_sum + other.lifetime_sum,
        )


def update_stats(stats: FailureStats, kind: IntervalKind | str, duration: float) -> FailureStats:
    if not duration > 0:
        raise ValueError(f"interval duration must be positive, got {duration!r}")
    kind = IntervalKind(kind)
    if kind is IntervalKind.UP:
        return replace(stats, up_count=stats.up_count + 1, up_sum=stats.up_sum + duration)
    if kind is IntervalKind.RECOVERY:
        return replace(stats, recovery_count=stats.recovery_count + 1, recovery_sum=stats.recovery_sum + duration)
    return replace(stats, lifetime_count=stats.lifetime_count + 1, lifetime_sum=stats.lifetime_sum + duration)


@dataclass(frozen=True)
class MarkovRates:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma"):
            object.__setattr__(self, name, _positive_finite(name, getattr(self, name)))

    @property
    def permanent_prior(self) -> float:
        """Pr(TTR = inf): share of failures that go A->P."""
        return self.gamma / (self.gamma + self.alpha)


@dataclass(frozen=True)
class WeibullParams:
    k: float
    lam: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "k", _positive_finite("k", self.k))
        object.__setattr__(self, "lam", _positive_finite("lambda", self.lam))

    @property
    def mean(self) -> float:
        return self.lam * math.gamma(1.0 + 1.0 / self.k)

    def survival(self, t: float) -> float:
        return math.exp(-((t / self.lam) ** self.k))


def rates_from_stats(stats: FailureStats) -> MarkovRates:
    missing = [n for n, c in (("up", stats.up_count), ("recovery", stats.recovery_count), ("lifetime", stats.lifetime_count)) if c == 0]
    if missing:
        raise InsufficientDataError("no observed " + ", ".join(missing) + " intervals")
    return MarkovRates(alpha=1.0 / stats.mttf, beta=1.0 / stats.mttr, gamma=1.0 / stats.mlt)


# -- log extraction -----------------------------------------------------------


def extract_recovery_times(log: AlarmLog, device: str, max_duration: int | None = None) -> list[int]:
    """Durations of ALARM runs that returned to OK.

    ``max_duration`` drops runs longer than the permanent-failure label, which
    matters for logs where permanently failed devices were later replaced.
    """
    out = []
    for run in log.runs(device):
        if run.closed and (max_duration is None or run.duration <= max_duration):
            out.append(run.duration)
    return out


def stats_from_log(
    log: AlarmLog,
    device: str,
    permanent_after: int = DEFAULT_PERMANENT_AFTER,
    end_tick: int | None = None,
    start_tick: int = 0,
) -> FailureStats:
    """Fold a device's alarm history into :class:`FailureStats`.

    Closed runs no longer than ``permanent_after`` are recoveries and the up
    time before them counts towards MTTF.  Runs longer than that are permanent
    failures: their start gives a lifetime measured from the device's install
    tick (``start_tick``, or the replacement tick after an earlier permanent
    failure).  Short runs still open at ``end_tick`` are censored and ignored.
    """
    if end_tick is None:
        end_tick = log.last_tick() if len(log) else start_tick
    stats = FailureStats()
    up_since = start_tick
    installed = start_tick
    for run in log.runs(device):
        length = run.duration if run.closed else run.observed_length(end_tick)
        if length > permanent_after:
            if run.start > installed:
                stats = update_stats(stats, IntervalKind.LIFETIME, run.start - installed)
            if not run.closed:
                break
            installed = up_since = run.end
            continue
        if not run.closed:
            break
        if run.start > up_since:
            stats = update_stats(stats, IntervalKind.UP, run.start - up_since)
        stats = update_stats(stats, IntervalKind.RECOVERY, run.duration)
        up_since = run.end
    return stats


# -- Weibull MLE --------------------------------------------------------------

_K_LO, _K_HI = 1e-3, 1e3


def _profile_residual(k: float, y: np.ndarray, y_bar: float, y_max: float) -> tuple[float, float]:
    """Shape-score residual and its derivative, with x**k scaled by max(x)**k."""
    w = np.exp(k * (y - y_max))
    sw = w.sum()
    m1 = float((w * y).sum() / sw)
    m2 = float((w * y * y).sum() / sw)
    resid = m1 - 1.0 / k - y_bar
    deriv = (m2 - m1 * m1) + 1.0 / (k * k)
    return resid, deriv


def fit_weibull(samples: Sequence[float], tol: float = 1e-9, max_iter: int = 200) -> WeibullParams:
    """Maximum-likelihood Weibull fit of positive durations.

    The shape solves ``1/k = sum(x^k ln x)/sum(x^k) - mean(ln x)``; Newton steps
    from k=1, falling back to bisection whenever a step leaves the current
    bracket.  The scale follows in closed form.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise InsufficientDataError(f"Weibull fit needs at least 3 samples, got {x.size}")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("Weibull samples must be positive and finite")
    y = np.log(x)
    if np.ptp(y) == 0:
        raise DegenerateSampleError("all samples are equal; shape estimate diverges")
    y_bar = float(y.mean())
    y_max = float(y.max())

    lo, hi = _K_LO, _K_HI
    if _profile_residual(lo, y, y_bar, y_max)[0] > 0 or _profile_residual(hi, y, y_bar, y_max)[0] < 0:
        raise ConvergenceError(f"shape root outside [{_K_LO}, {_K_HI}]")
    k = 1.0
    for _ in range(max_iter):
        r, dr = _profile_residual(k, y, y_bar, y_max)
        if abs(r) <= tol:
            break
        # residual is increasing in k
        if r > 0:
            hi = k
        else:
            lo = k
        step = k - r / dr if dr > 0 else math.nan
        k = step if lo < step < hi else 0.5 * (lo + hi)
    else:
        raise ConvergenceError(f"Weibull shape did not converge in {max_iter} iterations")

    log_mean_xk = math.log(float(np.exp(k * (y - y_max)).mean()))
    lam = math.exp(y_max + log_mean_xk / k)
    return WeibullParams(k=k, lam=lam)


# -- permanence and recovery --------------------------------------------------


def _check_t(t: float) -> float:
    if not t >= 0:
        raise ValueError(f"elapsed time must be non-negative, got {t!r}")
    return float(t)


def g_transient_weibull(rates: MarkovRates, w: WeibullParams, t: float) -> float:
    t = _check_t(t)
    return rates.gamma / (rates.gamma + rates.alpha * math.exp(-((t / w.lam) ** w.k)))


def g_transient_exponential(rates: MarkovRates, t: float) -> float:
    t = _check_t(t)
    return rates.gamma / (rates.gamma + rates.alpha * math.exp(-rates.beta * t))


def recovery_probability(w: WeibullParams, t: float, t_prime: float) -> float:
    """Recovery density at ``t_prime`` given failure observed through ``t``.

    Hazard-like ratio f(t')/S(t); a density, so it can exceed 1.
    """
    t = _check_t(t)
    t_prime = float(t_prime)
    if t_prime < t:
        raise ValueError(f"t_prime ({t_prime}) must be >= t ({t})")
    k, lam = w.k, w.lam
    if k == 1.0:
        return math.exp(-(t_prime - t) / lam) / lam
    if t_prime == 0.0:
        return math.inf if k < 1 else 0.0
    z = t_prime / lam
    return (k / lam) * z ** (k - 1) * math.exp((t / lam) ** k - z**k)


@dataclass(frozen=True)
class FailureClassification:
    device: str
    elapsed: float
    g: float
    verdict: Verdict
    form: str


def classify_failure(
    device: str,
    t: float,
    rates: MarkovRates,
    w: WeibullParams | None = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> FailureClassification:
    if w is not None:
        g, form = g_transient_weibull(rates, w, t), "weibull"
    else:
        g, form = g_transient_exponential(rates, t), "exponential"
    verdict = Verdict.PERMANENT if g > threshold else Verdict.TRANSIENT
    return FailureClassification(device, float(t), g, verdict, form)


# -- per-device fitting for reports ------------------------------------------


@dataclass(frozen=True)
class DeviceFit:
    """Fitted parameters for one device.

    Fields listed in ``pooled`` were taken from the network-wide pool because
    the device's own history was too thin.  Any field may be ``None`` when even
    the pool has no data.
    """

    device: str
    k: float | None
    lam: float | None
    alpha: float | None
    beta: float | None
    gamma: float | None
    n_samples: int
    pooled: tuple[str, ...] = ()

    def rates(self) -> MarkovRates:
        if None in (self.alpha, self.beta, self.gamma):
            raise InsufficientDataError(f"rates for {self.device!r} are incomplete")
        return MarkovRates(self.alpha, self.beta, self.gamma)

    def weibull(self) -> WeibullParams | None:
        if self.k is None or self.lam is None:
            return None
        return WeibullParams(self.k, self.lam)

    def to_record(self) -> dict:
        return {
            "device": self.device,
            "k": self.k,
            "lambda": self.lam,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "n_samples": self.n_samples,
            "pooled": list(self.pooled),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "DeviceFit":
        return cls(
            rec["device"], rec.get("k"), rec.get("lambda"), rec.get("alpha"), rec.get("beta"),
            rec.get("gamma"), int(rec.get("n_samples", 0)), tuple(rec.get("pooled", ())),
        )


def _try_fit(samples: list[int]) -> WeibullParams | None:
    try:
        return fit_weibull(samples)
    except (InsufficientDataError, DegenerateSampleError, ConvergenceError):
        return None


def fit_devices(
    log: AlarmLog,
    devices: Iterable[str],
    permanent_after: int = DEFAULT_PERMANENT_AFTER,
    end_tick: int | None = None,
) -> list[DeviceFit]:
    devices = sorted(devices)
    if end_tick is None:
        end_tick = log.last_tick() if len(log) else 0
    per_stats = {d: stats_from_log(log, d, permanent_after, end_tick) for d in devices}
    per_samples = {d: extract_recovery_times(log, d, permanent_after) for d in devices}

    pool = FailureStats()
    for s in per_stats.values():
        pool = pool + s
    pool_samples = [x for d in devices for x in per_samples[d]]
    pool_fit = _try_fit(pool_samples)

    fits = []
    for d in devices:
        s, pooled = per_stats[d], []
        means = {}
        for name, own, shared in (("alpha", s.mttf, pool.mttf), ("beta", s.mttr, pool.mttr), ("gamma", s.mlt, pool.mlt)):
            if own is None:
                pooled.append(name)
                own = shared
            means[name] = None if own is None else 1.0 / own
        wfit = _try_fit(per_samples[d])
        n = len(per_samples[d])
        if wfit is None:
            pooled.extend(("k", "lambda"))
            wfit, n = pool_fit, len(pool_samples)
        fits.append(
            DeviceFit(
                d,
                None if wfit is None else wfit.k,
                None if wfit is None else wfit.lam,
                means["alpha"], means["beta"], means["gamma"],
                n if wfit is not None else 0,
                tuple(sorted(pooled)),
            )
        )
    return fits
