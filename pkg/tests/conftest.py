import numpy as np
import pytest

import wtfpad


@pytest.fixture(scope="session")
def small_corpus():
    """10 pages x 10 instances; shared by the evaluation-flavored tests."""
    return wtfpad.synth_corpus(10, 10, seed=1)


@pytest.fixture(scope="session")
def small_hists(small_corpus):
    split = wtfpad.split_burst_gap(small_corpus)
    hists, _ = wtfpad.materialize_histograms(
        split, family="normal", percentile=0.4,
        rng=np.random.default_rng(7),
    )
    return hists


@pytest.fixture(scope="session")
def small_padded(small_corpus, small_hists):
    return wtfpad.simulate_corpus(small_corpus, small_hists, base_seed=3)
