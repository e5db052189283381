import numpy as np
import pytest

from wtfpad.baselines import (
    BuFLOParams,
    TamarawParams,
    buflo,
    tamaraw,
    transform_corpus,
)
from wtfpad.errors import InvalidParams
from wtfpad.simulator import overheads
from wtfpad.traces import Direction, Kind, PacketEvent, Trace


def burst_trace(out_times, in_times, size=1500, label="t"):
    events = [PacketEvent(t, Direction.OUTGOING, size) for t in out_times]
    events += [PacketEvent(t, Direction.INCOMING, size) for t in in_times]
    return Trace(tuple(sorted(events, key=lambda e: e.time)), label)


class TestBuflo:
    def test_empty_direction_padded_for_tau(self):
        trace = burst_trace([0.0, 0.01, 0.02], [])
        params = BuFLOParams(tau=1.0, rho=0.05)
        padded = buflo(trace, params)
        incoming = [e for e in padded if e.direction is Direction.INCOMING]
        assert all(e.kind is Kind.DUMMY for e in incoming)
        assert incoming[-1].time - incoming[0].time >= params.tau

    def test_constant_rate(self):
        trace = burst_trace([0.0, 0.001, 0.3], [0.05, 0.051])
        params = BuFLOParams(tau=0.5, rho=0.02)
        padded = buflo(trace, params)
        for d in (Direction.OUTGOING, Direction.INCOMING):
            times = [e.time for e in padded if e.direction is d]
            diffs = np.diff(times)
            assert np.allclose(diffs, params.rho, atol=1e-9)

    def test_long_transfer_outlasts_tau(self):
        trace = burst_trace([0.0, 12.0], [])
        params = BuFLOParams(tau=10.0, rho=0.5)
        padded = buflo(trace, params)
        assert padded.events[-1].time - padded.events[0].time > params.tau

    def test_latency_overhead_positive_on_bursts(self, small_corpus):
        params = BuFLOParams(tau=2.0, rho=0.02)
        for trace in small_corpus.traces[:10]:
            report = overheads(trace, buflo(trace, params))
            assert report.latency_overhead > 0.0

    def test_real_payload_order_preserved(self):
        trace = burst_trace([0.0, 0.0, 0.0, 0.4], [0.1, 0.1])
        padded = buflo(trace, BuFLOParams(tau=0.2, rho=0.01))
        for d in (Direction.OUTGOING, Direction.INCOMING):
            reals = [e for e in padded if e.direction is d and e.kind is Kind.REAL]
            assert len(reals) == len(trace.filtered(d))
            times = [e.time for e in reals]
            assert times == sorted(times)

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            BuFLOParams(tau=0.0)
        with pytest.raises(InvalidParams):
            BuFLOParams(rho=-1.0)


class TestTamaraw:
    def test_pad_to_multiple(self):
        trace = burst_trace([0.0] * 7, [])
        params = TamarawParams(rho_out=0.01, rho_in=0.01, pad_multiple=5)
        padded = tamaraw(trace, params)
        outgoing = [e for e in padded if e.direction is Direction.OUTGOING]
        assert len(outgoing) == 10
        assert sum(1 for e in outgoing if e.kind is Kind.REAL) == 7

    def test_exact_multiple_needs_no_padding(self):
        trace = burst_trace([0.0] * 5, [])
        params = TamarawParams(rho_out=0.01, rho_in=0.01, pad_multiple=5)
        padded = tamaraw(trace, params)
        assert len([e for e in padded if e.direction is Direction.OUTGOING]) == 5

    def test_counts_are_multiples_of_l(self, small_corpus):
        params = TamarawParams(pad_multiple=7)
        for trace in small_corpus.traces[:10]:
            padded = tamaraw(trace, params)
            for d in (Direction.OUTGOING, Direction.INCOMING):
                count = len(padded.filtered(d))
                assert count % params.pad_multiple == 0

    def test_anonymity_sets(self):
        params = TamarawParams(rho_out=0.01, rho_in=0.01, pad_multiple=5)
        a = tamaraw(burst_trace([0.0] * 7, [0.0] * 3), params)
        b = tamaraw(burst_trace([0.0] * 6, [0.0] * 2), params)
        for d in (Direction.OUTGOING, Direction.INCOMING):
            assert len(a.filtered(d)) == len(b.filtered(d))

    def test_latency_overhead_positive_on_bursts(self, small_corpus):
        params = TamarawParams()
        for trace in small_corpus.traces[:10]:
            report = overheads(trace, tamaraw(trace, params))
            assert report.latency_overhead > 0.0

    def test_per_direction_rates(self):
        trace = burst_trace([0.0, 0.0], [0.0, 0.0])
        params = TamarawParams(rho_out=0.01, rho_in=0.03, pad_multiple=2)
        padded = tamaraw(trace, params)
        out_times = [e.time for e in padded if e.direction is Direction.OUTGOING]
        in_times = [e.time for e in padded if e.direction is Direction.INCOMING]
        assert np.allclose(np.diff(out_times), 0.01)
        assert np.allclose(np.diff(in_times), 0.03)

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            TamarawParams(pad_multiple=0)


class TestTransformCorpus:
    def test_both_defenses(self, small_corpus):
        for name in ("buflo", "tamaraw"):
            padded = transform_corpus(small_corpus, name)
            assert len(padded) == len(small_corpus)
            assert padded.metadata["defense"] == name
        with pytest.raises(InvalidParams):
            transform_corpus(small_corpus, "nope")
