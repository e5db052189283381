"""Adaptive link-padding defense against website fingerprinting.

The package covers the whole experimental loop: parse or synthesize
packet-trace corpora, split inter-arrival times into bursts and gaps,
fit and tune their distributions, materialize token histograms, run the
two-endpoint padding simulation, compare against constant-rate
baselines, and measure what a k-NN attacker can still see.
"""

from .baselines import BuFLOParams, TamarawParams, buflo, tamaraw, transform_corpus
from .errors import WTFPadError
from .evaluation import (
    EvalReport,
    FeatureConfig,
    closed_world_eval,
    extract_features,
    features_matrix,
    knn_classify,
    open_world_eval,
    permute_labels,
    proc_curve,
    roc_binarized,
)
from .fitting import (
    BurstGapSplit,
    DistributionFit,
    fit_mle,
    ks_statistic,
    materialize_histograms,
    sample_from_fit,
    split_burst_gap,
    tune,
)
from .histograms import (
    INFINITY,
    HistogramSet,
    TokenHistogram,
    bin_boundaries,
    build_histogram,
    disabled_histogram_set,
    expected_burst_length,
    set_infinity_tokens_burst,
    set_infinity_tokens_gap,
)
from .padding import (
    Endpoint,
    MachineEvent,
    Mode,
    PaddingMachine,
    SetHistograms,
    StartOfTransmission,
    decode_control,
    encode_control,
    endpoint_handle,
    step,
)
from .simulator import LinkModel, OverheadReport, overheads, simulate, simulate_corpus
from .traces import (
    BurstProfile,
    Corpus,
    Direction,
    Kind,
    PacketEvent,
    Trace,
    instantaneous_bandwidth,
    interarrival_times,
    load_corpus,
    merge_traces,
    parse_trace,
    save_corpus,
    serialize_trace,
    synth_corpus,
)

__version__ = "0.1.0"
