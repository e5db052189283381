"""Burst/gap splitting, inter-arrival distribution fitting and tuning.

The padding histograms are materialized from a traffic corpus in three
steps: split each direction's inter-arrival times into within-burst and
between-burst samples using an instantaneous-bandwidth threshold, fit a
normal (raw or log-space) model to each sample set by maximum
likelihood, then shift the fit toward shorter delays according to a
percentile knob that trades bandwidth overhead for protection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import (
    DegenerateScale,
    EmptySamples,
    InvalidParams,
    InvalidPercentile,
    NonPositiveSample,
    TooFewEvents,
    TooFewSamples,
    ZeroDuration,
)
from .histograms import (
    ROLE_ORDER,
    HistogramSet,
    TokenHistogram,
    build_histogram,
    set_infinity_tokens_burst,
    set_infinity_tokens_gap,
)
from .traces import Corpus, Direction, instantaneous_bandwidth, interarrival_times

FAMILY_NORMAL = "normal"
FAMILY_LOGNORMAL = "lognormal"  # a normal fit on log inter-arrival times
FAMILIES = (FAMILY_NORMAL, FAMILY_LOGNORMAL)

AUTO_THRESHOLD = "auto"


@dataclass(frozen=True)
class DistributionFit:
    """Location/scale of a normal model in fit space (raw or log seconds)."""

    family: str
    mu: float
    sigma: float
    sample_count: int
    ks_statistic: float

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidParams(f"unknown family {self.family!r}")
        if not self.sigma > 0:
            raise DegenerateScale(f"sigma must be > 0, got {self.sigma}")


@dataclass
class BurstGapSplit:
    """Per-direction inter-arrival samples labeled burst or gap.

    ``burst_samples`` hold the short within-burst times (they feed the
    gap-mode histograms, which mimic bursts); ``gap_samples`` hold the
    long between-burst times (they feed the burst-mode histograms).
    """

    burst_samples: dict[Direction, list[float]]
    gap_samples: dict[Direction, list[float]]
    threshold: dict[Direction, float]
    window: int
    mean_burst_length: float


def split_burst_gap(
    corpus: Corpus,
    window: int = 2,
    threshold: float | str = AUTO_THRESHOLD,
) -> BurstGapSplit:
    """Label every inter-arrival gap of the corpus as burst or gap.

    A gap is part of a burst when the instantaneous bandwidth of the
    packet window starting at it reaches the threshold. The automatic
    threshold is each direction's average bandwidth over the whole
    corpus. The mean burst length (in packets) is derived from maximal
    runs of burst-labeled gaps.
    """
    if window < 2:
        raise InvalidParams(f"window must be >= 2, got {window}")
    directions = (Direction.OUTGOING, Direction.INCOMING)

    thresholds: dict[Direction, float] = {}
    for d in directions:
        if threshold != AUTO_THRESHOLD:
            thresholds[d] = float(threshold)
            continue
        total_bytes = 0
        total_span = 0.0
        for trace in corpus:
            events = trace.filtered(d)
            if len(events) < window:
                continue
            total_bytes += sum(e.size for e in events)
            total_span += events[-1].time - events[0].time
        if total_bytes == 0:
            continue  # direction unused in this corpus
        if total_span == 0:
            raise ZeroDuration(f"{d.name.lower()} traffic spans zero time")
        thresholds[d] = total_bytes / total_span

    burst: dict[Direction, list[float]] = {d: [] for d in directions}
    gap: dict[Direction, list[float]] = {d: [] for d in directions}
    run_lengths: list[int] = []
    used = False
    for d in directions:
        if d not in thresholds:
            continue
        for trace in corpus:
            events = trace.filtered(d)
            if len(events) < window:
                continue
            used = True
            iats = interarrival_times(trace, d)
            bw = [b for _, b in instantaneous_bandwidth(trace, window, d)]
            run = 0
            for i, iat in enumerate(iats):
                # trailing gaps reuse the last full window's bandwidth
                is_burst = bw[min(i, len(bw) - 1)] >= thresholds[d]
                if is_burst:
                    burst[d].append(iat)
                    run += 1
                else:
                    gap[d].append(iat)
                    if run:
                        run_lengths.append(run)
                        run = 0
            if run:
                run_lengths.append(run)
    if not used:
        raise TooFewEvents(f"no trace has {window} packets in any direction")
    if run_lengths:
        mean_burst_length = float(np.mean(run_lengths)) + 1.0
    else:
        mean_burst_length = 2.0  # no bursts observed; smallest meaningful burst
    return BurstGapSplit(burst, gap, thresholds, window, mean_burst_length)


def _prepare_samples(samples: Sequence[float], family: str, replace_zeros: bool) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise TooFewSamples(f"need >= 2 samples, got {x.size}")
    if family == FAMILY_LOGNORMAL:
        if np.any(x <= 0):
            positive = x[x > 0]
            if not replace_zeros:
                raise NonPositiveSample("log-space fit needs positive samples")
            if positive.size == 0:
                raise NonPositiveSample("all samples are zero")
            x = np.where(x > 0, x, positive.min())
        x = np.log(x)
    return x


def fit_mle(
    samples: Sequence[float],
    family: str = FAMILY_LOGNORMAL,
    replace_zeros: bool = True,
) -> DistributionFit:
    """Maximum-likelihood normal fit in raw or log space.

    Zero inter-arrival times (ties are common in traces) are replaced by
    the smallest positive sample before the log transform.
    """
    if family not in FAMILIES:
        raise InvalidParams(f"unknown family {family!r}")
    x = _prepare_samples(samples, family, replace_zeros)
    mu = float(np.mean(x))
    sigma = float(np.std(x))  # MLE variance uses 1/N
    if sigma == 0:
        raise DegenerateScale("all samples identical; scale is zero")
    d = ks_statistic(x, lambda v: norm.cdf(v, loc=mu, scale=sigma))
    return DistributionFit(family, mu, sigma, int(x.size), d)


def ks_statistic(samples: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """Kolmogorov-Smirnov distance between samples and a model CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise EmptySamples("KS statistic needs samples")
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def fit_cdf(fit: DistributionFit) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of a fit over raw delays (log fits transform internally)."""
    if fit.family == FAMILY_LOGNORMAL:
        def cdf(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros_like(x)
            pos = x > 0
            out[pos] = norm.cdf(np.log(x[pos]), loc=fit.mu, scale=fit.sigma)
            return out
        return cdf
    return lambda x: norm.cdf(np.asarray(x, dtype=float), loc=fit.mu, scale=fit.sigma)


def tune(fit: DistributionFit, percentile: float) -> DistributionFit:
    """Shift a fit toward shorter delays to pad a chosen data percentile.

    The tuned location is the percentile's quantile under the original
    fit; the tuned scale makes the shifted peak density equal the
    original density at that quantile, so the 50th percentile is the
    identity: mu' = mu, sigma' = sigma.
    """
    if not 0 < percentile <= 0.5:
        raise InvalidPercentile(f"percentile must be in (0, 0.5], got {percentile}")
    z = float(norm.ppf(percentile))
    mu_t = fit.mu + fit.sigma * z
    # closed form of 1/(sqrt(2*pi) * pdf(mu_t)); exact identity at z = 0
    sigma_t = fit.sigma * math.exp(z * z / 2.0)
    return DistributionFit(fit.family, mu_t, sigma_t, fit.sample_count, fit.ks_statistic)


def sample_from_fit(fit: DistributionFit, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw delays from a fit; raw-space draws clamp at zero seconds."""
    draws = rng.normal(fit.mu, fit.sigma, size=count)
    if fit.family == FAMILY_LOGNORMAL:
        return np.exp(draws)
    return np.maximum(draws, 0.0)


@dataclass(frozen=True)
class RoleFit:
    """Empirical and tuned fit behind one materialized histogram."""

    role: str
    fit: DistributionFit
    tuned: DistributionFit


# which split samples feed each histogram role: burst-mode histograms
# time the quiet spans between bursts, gap-mode histograms the packet
# spacing inside bursts
_ROLE_SOURCES = {
    "outgoing_burst": (Direction.OUTGOING, "gap_samples"),
    "outgoing_gap": (Direction.OUTGOING, "burst_samples"),
    "incoming_burst": (Direction.INCOMING, "gap_samples"),
    "incoming_gap": (Direction.INCOMING, "burst_samples"),
}


def materialize_histograms(
    split: BurstGapSplit,
    family: str = FAMILY_LOGNORMAL,
    percentile: float = 0.5,
    n: int = 20,
    max_iat: float | None = None,
    token_budget: int = 300,
    pn_burst: float = 0.4,
    rng: np.random.Generator | None = None,
    rounding: str | None = None,
) -> tuple[HistogramSet, dict[str, RoleFit]]:
    """Fit, tune and sample the four padding histograms from a split.

    Each role's histogram holds `token_budget` finite tokens drawn from
    its tuned fit; burst-mode infinity bins are sized from `pn_burst`
    and gap-mode ones from the observed mean burst length. When
    `max_iat` is not given each role uses the 99th percentile of its own
    source samples.

    Because both endpoints' receive machines react to each other's
    padding, small `pn_burst` values make the end-of-session padding
    exchange very long; below roughly 0.25 its expected volume dwarfs
    the page itself.
    """
    if token_budget < n:
        raise InvalidParams(f"token budget {token_budget} below bin count {n}")
    if rng is None:
        rng = np.random.default_rng(0)
    hists: dict[str, TokenHistogram] = {}
    fits: dict[str, RoleFit] = {}
    for role in ROLE_ORDER:
        direction, attr = _ROLE_SOURCES[role]
        samples = getattr(split, attr)[direction]
        if len(samples) < 2:
            raise TooFewSamples(f"role {role}: {len(samples)} samples")
        fit = fit_mle(samples, family)
        tuned = tune(fit, percentile)
        fits[role] = RoleFit(role, fit, tuned)
        m = float(max_iat) if max_iat is not None else float(np.percentile(samples, 99))
        if m <= 0:
            m = max(float(np.max(samples)), 1e-6)
        delays = sample_from_fit(tuned, token_budget, rng)
        h = build_histogram(n, m, delays)
        if rounding is not None:
            h.rounding = rounding
        if role.endswith("_burst"):
            set_infinity_tokens_burst(h, pn_burst)
        else:
            set_infinity_tokens_gap(h, split.mean_burst_length)
        hists[role] = h
    return HistogramSet(**hists), fits
