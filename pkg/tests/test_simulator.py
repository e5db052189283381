import numpy as np
import pytest

import wtfpad.simulator as simulator_module
from wtfpad.errors import InvalidParams, MissingRealEvents, SimulationCapExceeded
from wtfpad.histograms import (
    HistogramSet,
    TokenHistogram,
    build_histogram,
    disabled_histogram_set,
    set_infinity_tokens_burst,
    set_infinity_tokens_gap,
)
from wtfpad.padding import Endpoint
from wtfpad.simulator import LinkModel, OverheadReport, overheads, simulate, simulate_corpus
from wtfpad.traces import Corpus, Direction, Kind, PacketEvent, Trace, synth_corpus


def endpoints(hists, cell_size=1500):
    return (
        Endpoint.from_histogram_set("client", hists, cell_size),
        Endpoint.from_histogram_set("bridge", hists, cell_size),
    )


class TestSimulate:
    def test_disabled_padding_is_identity(self, small_corpus):
        client, bridge = endpoints(disabled_histogram_set())
        trace = small_corpus.traces[0]
        assert simulate(trace, client, bridge, seed=1) == trace

    def test_real_packets_bit_exact(self, small_corpus, small_hists):
        for i, trace in enumerate(small_corpus.traces[:10]):
            client, bridge = endpoints(small_hists)
            padded = simulate(trace, client, bridge, seed=i)
            original = [(e.time, e.direction, e.size) for e in trace]
            kept = [(e.time, e.direction, e.size) for e in padded if e.kind is Kind.REAL]
            assert kept == original

    def test_deterministic(self, small_corpus, small_hists):
        trace = small_corpus.traces[3]
        runs = []
        for _ in range(2):
            client, bridge = endpoints(small_hists)
            runs.append(simulate(trace, client, bridge, seed=77))
        assert runs[0] == runs[1]

    def test_endpoints_reach_soft_stop(self, small_corpus, small_hists):
        client, bridge = endpoints(small_hists)
        simulate(small_corpus.traces[1], client, bridge, seed=5)
        assert client.is_quiescent()
        assert bridge.is_quiescent()

    def test_output_time_ordered_with_kinds(self, small_padded):
        for padded in small_padded.traces[:5]:
            times = [e.time for e in padded]
            assert times == sorted(times)
            kinds = {e.kind for e in padded}
            assert Kind.DUMMY in kinds and Kind.REAL in kinds

    def test_client_control_flag_present(self, small_padded):
        # sent when the client's send machine first leaves idle, which is
        # the first outgoing push whose burst draw was finite
        for padded in small_padded.traces[:5]:
            controls = [e for e in padded if e.kind is Kind.CONTROL]
            assert len(controls) == 1
            assert controls[0].direction is Direction.OUTGOING
            push_times = {
                e.time for e in padded
                if e.kind is Kind.REAL and e.direction is Direction.OUTGOING
            }
            assert controls[0].time in push_times

    def test_rejects_non_raw_trace(self, small_hists):
        trace = Trace((PacketEvent(0.0, Direction.OUTGOING, 1500, Kind.DUMMY),))
        client, bridge = endpoints(small_hists)
        with pytest.raises(InvalidParams):
            simulate(trace, client, bridge)

    def test_fake_burst_spacing_follows_gap_histogram(self):
        # gap delays concentrated below 2 ms; fake-burst dummies must
        # show that spacing on the wire
        def pair():
            burst = build_histogram(5, 0.016, np.linspace(0.0005, 0.02, 60))
            set_infinity_tokens_burst(burst, 0.3)
            gap = TokenHistogram(5, 0.016, [60, 0, 0, 0, 0])
            set_infinity_tokens_gap(gap, 4.0)
            return burst, gap

        hists = HistogramSet(*pair(), *pair())
        trace = Trace(
            tuple(PacketEvent(0.05 * i, Direction.OUTGOING, 1500) for i in range(10)),
            "t",
        )
        client, bridge = endpoints(hists)
        padded = simulate(trace, client, bridge, seed=9)
        dummies = [e for e in padded if e.kind is Kind.DUMMY]
        assert len(dummies) > 20
        gaps = [b.time - a.time for a, b in zip(dummies, dummies[1:])
                if b.direction == a.direction]
        assert float(np.median(gaps)) < 0.002

    def test_runaway_configuration_hits_cap(self, monkeypatch):
        monkeypatch.setattr(simulator_module, "TIMER_EVENT_CAP", 2000)

        def pair():
            burst = build_histogram(5, 0.016, np.full(50, 0.004))
            set_infinity_tokens_burst(burst, 0.0)  # never settles down
            gap = TokenHistogram(5, 0.016, [50, 0, 0, 0, 1])
            return burst, gap

        hists = HistogramSet(*pair(), *pair())
        trace = Trace((PacketEvent(0.0, Direction.OUTGOING, 1500),), "t")
        client, bridge = endpoints(hists)
        with pytest.raises(SimulationCapExceeded):
            simulate(trace, client, bridge, seed=0)

    def test_one_way_delay_keeps_real_times(self, small_corpus, small_hists):
        trace = small_corpus.traces[0]
        client, bridge = endpoints(small_hists)
        padded = simulate(trace, client, bridge, LinkModel(0.05), seed=4)
        original = [(e.time, e.direction) for e in trace]
        kept = [(e.time, e.direction) for e in padded if e.kind is Kind.REAL]
        assert kept == original


class TestSimulateCorpus:
    def test_per_trace_seed_derivation(self, small_corpus, small_hists):
        padded = simulate_corpus(small_corpus, small_hists, base_seed=3)
        client, bridge = endpoints(small_hists)
        lone = simulate(small_corpus.traces[5], client, bridge, seed=3 ^ 5)
        assert padded.traces[5] == lone

    def test_labels_preserved(self, small_corpus, small_padded):
        assert small_padded.labels == small_corpus.labels


class TestOverheads:
    def test_identity(self, small_corpus):
        trace = small_corpus.traces[0]
        report = overheads(trace, trace)
        assert report == OverheadReport(0.0, 0.0, 0, 0)

    def test_54_dummies_on_100_cells(self):
        reals = tuple(
            PacketEvent(0.01 * i, Direction.OUTGOING, 1500) for i in range(100)
        )
        original = Trace(reals, "t")
        dummies = tuple(
            PacketEvent(1.0 + 0.001 * i, Direction.OUTGOING, 1500, Kind.DUMMY)
            for i in range(54)
        )
        padded = Trace(tuple(sorted(reals + dummies, key=lambda e: e.time)), "t")
        report = overheads(original, padded)
        assert report.bandwidth_overhead == pytest.approx(0.54)
        assert report.latency_overhead == 0.0
        assert report.dummy_count == 54

    def test_zero_latency_for_adaptive_padding(self, small_corpus, small_padded):
        for original, padded in zip(small_corpus, small_padded):
            report = overheads(original, padded)
            assert report.latency_overhead == 0.0
            assert report.bandwidth_overhead >= 0.0

    def test_missing_real_event_is_an_error(self, small_corpus):
        trace = small_corpus.traces[0]
        truncated = Trace(trace.events[:-1], trace.label)
        with pytest.raises(MissingRealEvents):
            overheads(trace, truncated)


class TestLinkModel:
    def test_validation(self):
        with pytest.raises(InvalidParams):
            LinkModel(-0.1)
        with pytest.raises(InvalidParams):
            LinkModel(float("inf"))
