import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tendonsim.core import (LOG_COLUMNS, SCENARIO_KINDS, ConfigError, StreamingAverage,
                            TimeSeriesLog, config_items, dump_config, load_config, make_rng,
                            moving_average, with_overrides)


@pytest.mark.parametrize("kind", SCENARIO_KINDS)
def test_dump_round_trip(kind):
    cfg = load_config(f"scenario = {kind}\n")
    text = dump_config(cfg)
    assert dump_config(load_config(text)) == text


def test_defaults_applied_before_document_keys():
    cfg = load_config("scenario = force-step\ntendon0.setpoint = 2.5\n")
    assert cfg.tendon0.mode == "force"
    assert cfg.tendon0.setpoint == 2.5


@pytest.mark.parametrize("text, key", [
    ("dt = 0.001\n", "scenario"),
    ("scenario = nope\n", "scenario"),
    ("scenario = force-step\nbogus = 1\n", "bogus"),
    ("scenario = force-step\nmotor.bogus = 1\n", "motor.bogus"),
    ("scenario = force-step\ndt = fast\n", "dt"),
    ("scenario = force-step\ndt = -1\n", "dt"),
    ("scenario = force-step\ntransmission.eta = 1.2\n", "transmission.eta"),
    ("scenario = force-step\ntendon1.mode = push\n", "tendon1.mode"),
    ("scenario = force-step\nn_sub = 2.5\n", "n_sub"),
    ("scenario = force-step\ndt = 1\ndt = 2\n", "dt"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError) as err:
        load_config(text)
    assert err.value.key == key


def test_comments_and_booleans():
    cfg = load_config("# header\nscenario = force-step  # trailing\nbaseline = no\n")
    assert cfg.baseline is False


def test_with_overrides_keeps_other_fields():
    cfg = load_config("scenario = single-contact\n")
    new = with_overrides(cfg, contact={"link": 4}, duration=2.0)
    assert new.contact.link == 4 and new.contact.magnitude == cfg.contact.magnitude
    assert new.duration == 2.0 and cfg.duration == 1.0


def test_n_steps_tolerates_representation_error():
    cfg = load_config("scenario = force-step\nduration = 0.3\ndt = 0.001\n")
    assert cfg.n_steps == 300


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=80), st.integers(1, 30))
def test_streaming_average_matches_batch(xs, w):
    s = StreamingAverage(w)
    online = np.array([s.push(x) for x in xs])
    np.testing.assert_allclose(online, moving_average(xs, w), rtol=1e-9, atol=1e-9)


def test_moving_average_prefix_and_window():
    y = moving_average([1.0, 2.0, 3.0, 4.0], 2)
    np.testing.assert_allclose(y, [1.0, 1.5, 2.5, 3.5])
    with pytest.raises(ValueError):
        moving_average([1.0], 0)


def test_make_rng_streams_independent_and_repeatable():
    a = make_rng(3, "x").random(4)
    assert np.array_equal(a, make_rng(3, "x").random(4))
    assert not np.array_equal(a, make_rng(3, "y").random(4))
    assert not np.array_equal(a, make_rng(4, "x").random(4))


def test_log_csv_round_trip():
    cfg = load_config("scenario = force-step\n")
    cols = {n: np.linspace(0, 1, 5) * (k + 1) for k, n in enumerate(LOG_COLUMNS)}
    log = TimeSeriesLog(cols, config_items(cfg))
    back = TimeSeriesLog.from_csv(log.to_csv())
    assert list(back.columns) == list(LOG_COLUMNS)
    for n in LOG_COLUMNS:
        np.testing.assert_allclose(back[n], cols[n], rtol=1e-11)
    assert dump_config(back.config()) == dump_config(cfg)
    assert back.to_csv() == log.to_csv()


def test_empty_log():
    log = TimeSeriesLog.from_csv("# tendonsim log schema 1\n")
    assert len(log) == 0 and math.isnan(TimeSeriesLog({"t": np.zeros(1)}).dt)
