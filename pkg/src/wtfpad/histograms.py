"""Exponential-bin token histograms driving the adaptive padding machines.

A histogram partitions [0, +inf) into n bins whose widths grow
exponentially up to a practical maximum delay M; the last bin (the
"infinity bin") covers [M, +inf) and sampling it means "no padding".
Each bin holds an integer number of tokens; the probability of sampling
bin i is k_i / (K + k_n) where K is the total finite-token mass.

Tokens are consumed when a delay is realized and returned when a real
packet preempts a pending delay, which keeps the combined timing
distribution of real and dummy traffic on target. When every bin runs
dry the histogram refills from its initial snapshot.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyHistogram,
    EmptySamples,
    InvalidMeanLength,
    InvalidParams,
    InvalidProbability,
    NegativeTime,
)

#: Distinguished sample value for the infinity bin.
INFINITY = math.inf

ROUND_NEAREST = "nearest"
ROUND_CEIL = "ceil"


def _round_tokens(x: float, mode: str) -> int:
    if mode == ROUND_CEIL:
        return int(math.ceil(x))
    if mode == ROUND_NEAREST:
        # nearest integer, half away from zero (x is never negative here)
        return int(math.floor(x + 0.5))
    raise InvalidParams(f"unknown rounding mode {mode!r}")


def bin_boundaries(n: int, max_iat: float) -> list[tuple[float, float]]:
    """Half-open [a_i, b_i) intervals of an n-bin histogram with maximum M.

    Intermediate bin i spans [M/2^(n-i), M/2^(n-i-1)); the first bin
    starts at 0 and the last covers [M, +inf). Together the bins
    partition [0, +inf).
    """
    if n < 2:
        raise InvalidParams(f"need >= 2 bins, got {n}")
    if not max_iat > 0:
        raise InvalidParams(f"max inter-arrival time must be > 0, got {max_iat}")
    bounds = [(0.0, max_iat / 2 ** (n - 2))]
    for i in range(2, n):
        bounds.append((max_iat / 2 ** (n - i), max_iat / 2 ** (n - i - 1)))
    bounds.append((max_iat, math.inf))
    return bounds


@dataclass
class TokenHistogram:
    """Mutable token histogram owned by exactly one padding machine."""

    n_bins: int
    max_iat: float
    tokens: list[int]
    initial_tokens: list[int] = field(default_factory=list)
    rounding: str = ROUND_NEAREST

    def __post_init__(self) -> None:
        if self.n_bins < 2:
            raise InvalidParams(f"need >= 2 bins, got {self.n_bins}")
        if not self.max_iat > 0:
            raise InvalidParams(f"max inter-arrival time must be > 0")
        if len(self.tokens) != self.n_bins:
            raise InvalidParams(
                f"{self.n_bins} bins but {len(self.tokens)} token counts"
            )
        if any(k < 0 for k in self.tokens):
            raise InvalidParams("token counts must be non-negative")
        self.tokens = [int(k) for k in self.tokens]
        if not self.initial_tokens:
            self.initial_tokens = list(self.tokens)
        elif len(self.initial_tokens) != self.n_bins:
            raise InvalidParams("initial token snapshot has wrong length")
        # lower bin edges, cached for bisect lookups
        self._lows = [lo for lo, _ in bin_boundaries(self.n_bins, self.max_iat)]

    # --- geometry ---

    def boundaries(self) -> list[tuple[float, float]]:
        return bin_boundaries(self.n_bins, self.max_iat)

    def bin_index(self, t: float) -> int:
        """1-based index of the bin containing delay t (n for +inf)."""
        if t is INFINITY or t == math.inf:
            return self.n_bins
        if t < 0:
            raise NegativeTime(f"delay must be >= 0, got {t}")
        return bisect_right(self._lows, t)

    # --- token mass ---

    @property
    def finite_tokens(self) -> int:
        """K: token mass of all bins except the infinity bin."""
        return sum(self.tokens[:-1])

    @property
    def total_tokens(self) -> int:
        return sum(self.tokens)

    def probabilities(self) -> list[float]:
        total = self.total_tokens
        if total == 0:
            return [0.0] * self.n_bins
        return [k / total for k in self.tokens]

    # --- construction helpers ---

    def copy(self) -> "TokenHistogram":
        return TokenHistogram(
            self.n_bins,
            self.max_iat,
            list(self.tokens),
            list(self.initial_tokens),
            self.rounding,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n_bins,
            "M": self.max_iat,
            "tokens": list(self.tokens),
            "initial_tokens": list(self.initial_tokens),
            "rounding": self.rounding,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenHistogram":
        return cls(
            int(data["n"]),
            float(data["M"]),
            [int(k) for k in data["tokens"]],
            [int(k) for k in data.get("initial_tokens", data["tokens"])],
            str(data.get("rounding", ROUND_NEAREST)),
        )

    # --- sampling and accounting ---

    def sample_delay(self, rng: np.random.Generator) -> float:
        """Draw a delay: uniform within a token-weighted bin, INFINITY for bin n.

        The chosen token stays in place; removal happens later through
        consume_token or return_token depending on what the machine does
        with the delay.
        """
        total = self.total_tokens
        if total == 0:
            raise EmptyHistogram("no tokens to sample")
        pick = rng.integers(total)
        acc = 0
        idx = self.n_bins - 1
        for i, k in enumerate(self.tokens):
            acc += k
            if pick < acc:
                idx = i
                break
        if idx == self.n_bins - 1:
            return INFINITY
        lo, hi = self._lows[idx], (
            self._lows[idx + 1] if idx + 1 < self.n_bins else self.max_iat
        )
        return lo + rng.random() * (hi - lo)

    def refill(self) -> None:
        """Restore the initial token snapshot."""
        self.tokens = list(self.initial_tokens)

    def consume_token(self, delay: float) -> "TokenHistogram":
        """Remove one token for a realized delay.

        If the delay's bin is empty the nearest non-empty greater bin
        pays instead, falling back to the nearest non-empty smaller bin;
        if everything is empty the histogram refills first.
        """
        if self.total_tokens == 0:
            self.refill()
            if self.total_tokens == 0:
                raise EmptyHistogram("initial snapshot holds no tokens")
        idx = self.bin_index(delay) - 1
        if self.tokens[idx] > 0:
            self.tokens[idx] -= 1
            return self
        for i in range(idx + 1, self.n_bins):
            if self.tokens[i] > 0:
                self.tokens[i] -= 1
                return self
        for i in range(idx - 1, -1, -1):
            if self.tokens[i] > 0:
                self.tokens[i] -= 1
                return self
        raise EmptyHistogram("unreachable: refill guaranteed a token")

    def return_token(self, delay_sampled: float, delay_actual: float) -> "TokenHistogram":
        """Undo a pending delay that a real packet preempted.

        The sampled delay's token goes back to its bin and the bin of the
        actually observed delay pays one token, so the realized timing
        distribution still follows the histogram.
        """
        self.tokens[self.bin_index(delay_sampled) - 1] += 1
        return self.consume_token(delay_actual)


def build_histogram(
    n: int,
    max_iat: float,
    samples: "list[float] | np.ndarray",
    rounding: str = ROUND_NEAREST,
) -> TokenHistogram:
    """Count delay samples into an n-bin histogram.

    Samples at or beyond M land in bin n-1: the infinity bin is reserved
    for the analytically chosen stop/no-pad mass, not for outliers.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise EmptySamples("cannot build a histogram from no samples")
    if np.any(samples < 0):
        raise InvalidParams("delay samples must be >= 0")
    bounds = bin_boundaries(n, max_iat)
    lows = [lo for lo, _ in bounds]
    tokens = [0] * n
    for idx in np.searchsorted(lows, samples, side="right"):
        tokens[min(int(idx) - 1, n - 2)] += 1
    return TokenHistogram(n, max_iat, tokens, rounding=rounding)


def set_infinity_tokens_burst(
    h: TokenHistogram, p_infinity: float, rounding: str | None = None
) -> TokenHistogram:
    """Size the infinity bin for a burst-mode histogram.

    Solves the bin-probability equation for k_n so that sampling the
    infinity bin (i.e. not starting a fake burst) has probability
    `p_infinity`: k_n = p/(1-p) * K.
    """
    if not 0 <= p_infinity < 1:
        raise InvalidProbability(f"need 0 <= p < 1, got {p_infinity}")
    if h.finite_tokens < 1:
        raise InvalidParams("histogram needs finite tokens before sizing infinity")
    mode = rounding if rounding is not None else h.rounding
    h.rounding = mode
    h.tokens[-1] = _round_tokens(p_infinity / (1 - p_infinity) * h.finite_tokens, mode)
    h.initial_tokens = list(h.tokens)
    return h


def set_infinity_tokens_gap(
    h: TokenHistogram, mean_burst_length: float, rounding: str | None = None
) -> TokenHistogram:
    """Size the infinity bin for a gap-mode histogram.

    Chooses k_n so the expected number of token draws without
    replacement until the first infinity token, (K + k_n + 1)/(k_n + 1),
    equals the observed mean burst length: k_n = (K - mu + 1)/(mu - 1),
    floored at one token so fake bursts always terminate.
    """
    if not mean_burst_length > 1:
        raise InvalidMeanLength(f"mean burst length must exceed 1, got {mean_burst_length}")
    if h.finite_tokens < mean_burst_length:
        raise InvalidMeanLength(
            f"token mass {h.finite_tokens} below mean burst length {mean_burst_length}"
        )
    mode = rounding if rounding is not None else h.rounding
    h.rounding = mode
    k_n = _round_tokens(
        (h.finite_tokens - mean_burst_length + 1) / (mean_burst_length - 1), mode
    )
    h.tokens[-1] = max(1, k_n)
    h.initial_tokens = list(h.tokens)
    return h


def expected_burst_length(h: TokenHistogram) -> float:
    """Expected draws without replacement until the first infinity token."""
    return (h.total_tokens + 1) / (h.tokens[-1] + 1)


def disabled_histogram(n: int = 20, max_iat: float = 1.0, tokens: int = 1000) -> TokenHistogram:
    """All-infinity histogram: every sample suppresses padding."""
    counts = [0] * n
    counts[-1] = tokens
    return TokenHistogram(n, max_iat, counts)


#: Canonical role order used by serialization and the control wire format.
ROLE_ORDER = ("outgoing_burst", "outgoing_gap", "incoming_burst", "incoming_gap")


@dataclass
class HistogramSet:
    """The four histograms of one defense deployment, keyed by the
    direction of the traffic they time (burst-mode and gap-mode each).

    The client's send machine emits outgoing traffic and uses the
    outgoing pair; its receive machine uses the incoming pair. The
    bridge mirrors this: its send machine emits incoming traffic.
    """

    outgoing_burst: TokenHistogram
    outgoing_gap: TokenHistogram
    incoming_burst: TokenHistogram
    incoming_gap: TokenHistogram

    def roles(self) -> list[tuple[str, TokenHistogram]]:
        return [(name, getattr(self, name)) for name in ROLE_ORDER]

    def copy(self) -> "HistogramSet":
        return HistogramSet(*(h.copy() for _, h in self.roles()))

    def to_dict(self) -> dict:
        return {name: h.to_dict() for name, h in self.roles()}

    @classmethod
    def from_dict(cls, data: dict) -> "HistogramSet":
        return cls(**{name: TokenHistogram.from_dict(data[name]) for name in ROLE_ORDER})


def disabled_histogram_set(n: int = 20, max_iat: float = 1.0) -> HistogramSet:
    """Histogram set that never pads; simulation becomes the identity."""
    return HistogramSet(*(disabled_histogram(n, max_iat) for _ in ROLE_ORDER))
