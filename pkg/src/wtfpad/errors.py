"""Exception hierarchy shared by all wtfpad modules."""


class WTFPadError(Exception):
    """Base class for all errors raised by this package."""


# --- trace parsing and trace operations ---

class MalformedLine(WTFPadError):
    """A trace file line did not match `<timestamp>\\t<signed-size>`."""


class NonMonotonicTime(WTFPadError):
    """Trace timestamps decreased."""


class EmptyTrace(WTFPadError):
    """A trace contains no packets."""


class TooFewEvents(WTFPadError):
    """An operation needs more packets than the (filtered) trace has."""


class InvalidParams(WTFPadError):
    """A numeric parameter is outside its documented range."""


# --- token histograms ---

class NegativeTime(WTFPadError):
    """A delay lookup was attempted with t < 0."""


class EmptySamples(WTFPadError):
    """A histogram build or statistic received no samples."""


class InvalidProbability(WTFPadError):
    """Infinity-bin probability outside [0, 1)."""


class InvalidMeanLength(WTFPadError):
    """Mean burst length must exceed 1 and not exceed the token mass."""


class EmptyHistogram(WTFPadError):
    """Sampling from a histogram whose bins (incl. infinity) hold no tokens."""


# --- distribution fitting ---

class TooFewSamples(WTFPadError):
    """Fitting needs at least two samples."""


class NonPositiveSample(WTFPadError):
    """Log-space fitting received a sample <= 0 with zero-replacement off."""


class DegenerateScale(WTFPadError):
    """Fitted scale collapsed to zero (all samples identical)."""


class InvalidPercentile(WTFPadError):
    """Tuning percentile outside (0, 0.5]."""


class ZeroDuration(WTFPadError):
    """Automatic bandwidth threshold undefined: corpus spans zero time."""


# --- padding machines and control messages ---

class InvalidTransition(WTFPadError):
    """A machine event that is not legal in the current mode."""


class ClockRegression(WTFPadError):
    """Endpoint events were delivered with decreasing timestamps."""


class PayloadTooLarge(WTFPadError):
    """A control payload does not fit into one cell."""


class MalformedControl(WTFPadError):
    """A control cell could not be decoded."""


# --- simulation ---

class MissingRealEvents(WTFPadError):
    """A padded trace lost real packets; always an implementation bug."""


class SimulationCapExceeded(WTFPadError):
    """Timer-event safety cap hit; the histogram configuration is runaway."""


# --- evaluation ---

class InvalidK(WTFPadError):
    """k or the vote threshold is incompatible with the training set."""


class InsufficientInstances(WTFPadError):
    """Cross-validation needs at least `folds` instances per label."""


class InsufficientBackground(WTFPadError):
    """Open-world background corpus smaller than the requested world size."""


class NoPositives(WTFPadError):
    """A precision-recall curve needs at least one positive instance."""
