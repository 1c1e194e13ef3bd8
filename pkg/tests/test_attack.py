import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from safefield.attack import (AttackError, AttackScenario, Constant, Gaussian, Ramp, Table, agents_attack,
                              apply_attack, make_signal, sample_compromised_agents)
from safefield.field import StreamIndex


def test_no_attack_is_identity():
    clean = np.array([1.0, 7.0, 3.0])
    assert np.array_equal(apply_attack(clean, AttackScenario.none(), 4), clean)


def test_constant_replaces():
    out = apply_attack(np.array([1.0, 7.0, 3.0]), AttackScenario([1], Constant(255)), 0)
    assert out.tolist() == [1, 255, 3]


def test_ramp_adds():
    out = apply_attack(np.array([2.0, 0.0]), AttackScenario([0], Ramp(0, 1)), 5)
    assert out[0] == 2 + 5


def test_table_holds_last_value():
    scen = AttackScenario([0], Table((1.0, 2.0)))
    assert apply_attack(np.zeros(1), scen, 0)[0] == 1
    assert apply_attack(np.zeros(1), scen, 9)[0] == 2


def test_gaussian_is_replayable_per_step():
    g = Gaussian(0, 1, seed=11)
    scen = AttackScenario([0, 2], g)
    a = apply_attack(np.zeros(3), scen, 7)
    apply_attack(np.zeros(3), scen, 3)
    assert np.array_equal(apply_attack(np.zeros(3), scen, 7), a)
    assert not np.array_equal(apply_attack(np.zeros(3), scen, 8), a)
    assert a[1] == 0


def test_per_stream_signals():
    scen = AttackScenario([0, 1], default=Constant(9), signals={1: Ramp(1, 0)})
    assert apply_attack(np.array([5.0, 5.0]), scen, 0).tolist() == [9, 6]


def test_missing_signal_rejected():
    with pytest.raises(AttackError):
        AttackScenario([0])


def test_make_signal():
    assert make_signal({"kind": "constant", "value": 3}) == Constant(3.0)
    assert make_signal({"kind": "table", "values": [1, 2]}) == Table((1.0, 2.0))
    with pytest.raises(AttackError):
        make_signal({"kind": "sine"})


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=20), st.data())
def test_uncompromised_streams_untouched(clean, data):
    clean = np.array(clean)
    A = data.draw(st.sets(st.integers(0, clean.size - 1), max_size=clean.size - 1))
    scen = AttackScenario(sorted(A), Ramp(3.0, 2.0))
    t = data.draw(st.integers(0, 1000))
    out = apply_attack(clean, scen, t)
    keep = np.setdiff1d(np.arange(clean.size), list(A))
    assert np.array_equal(out[keep], clean[keep])


def test_sample_zero_and_all():
    rng = np.random.default_rng(0)
    assert sample_compromised_agents(10, 0, rng).size == 0
    idx = StreamIndex([2, 3, 1])
    scen = agents_attack(idx, sample_compromised_agents(3, 3, rng), Constant())
    assert scen.covers_all(idx.P)
    assert "every measurement stream is compromised" in scen.check(idx.P)
    with pytest.raises(AttackError):
        sample_compromised_agents(3, 4, rng)


def test_selection_frequency():
    rng = np.random.default_rng(5)
    counts = np.zeros(625)
    for _ in range(1000):
        ids = sample_compromised_agents(625, 70, rng)
        assert ids.size == 70 and np.all(np.diff(ids) > 0)
        counts[ids] += 1
    dev = np.abs(counts / 1000 - 70 / 625)
    # +-0.03 is about three binomial standard deviations for a single agent
    assert np.mean(dev <= 0.03) >= 0.99
    assert dev.max() <= 0.05


def test_agents_attack_covers_their_streams():
    idx = StreamIndex([2, 3, 1])
    scen = agents_attack(idx, [1], Constant())
    assert scen.compromised.tolist() == [2, 3, 4]
