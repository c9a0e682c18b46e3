import numpy as np
import pytest

from tendonsim.analysis import rise_time, xcorr_delay
from tendonsim.perception import (ContactDetector, ContactEvent, DetectorConfig,
                                  PeriodNotRecoverable, apparent_period, detect_contact,
                                  events_from_csv, events_to_csv)

DT = 1e-3
CFG = DetectorConfig(baseline_window=20, window=5, refractory=0.3)


def test_abs_rule_fires_at_threshold_inclusive():
    x = np.r_[np.full(30, 1.0), np.full(10, 1.8)]
    ev = detect_contact(x, DT, CFG)
    assert ev[0].rule == "abs" and ev[0].t == pytest.approx(30 * DT)
    assert ev[0].baseline == 1.0


def test_rel_rule_when_absolute_rise_is_small():
    x = np.r_[np.full(30, 0.2), np.full(10, 0.3)]
    ev = detect_contact(x, DT, CFG)
    assert [e.rule for e in ev] == ["rel"]


def test_slope_rule_on_ramp():
    cfg = DetectorConfig(abs_rise=10, rel_rise=10, slope=6.0, window=5, baseline_window=20)
    x = np.r_[np.full(30, 1.0), 1.0 + 7.0 * DT * np.arange(1, 40)]
    ev = detect_contact(x, DT, cfg)
    assert ev and ev[0].rule == "slope"


def test_refractory_suppresses_repeats():
    x = np.r_[np.full(30, 1.0), np.full(600, 3.0)]
    ev = detect_contact(x, DT, CFG)
    gaps = np.diff([e.t for e in ev])
    assert np.all(gaps >= 0.3 - 1e-9)


def test_silent_before_baseline_full():
    det = ContactDetector(DT, CFG)
    assert all(det.push(v) is None for v in [0.0] * 19 + [10.0])


def test_short_trace_rejected():
    with pytest.raises(ValueError):
        detect_contact(np.zeros(20), DT, CFG)


def test_event_csv_round_trip():
    ev = [ContactEvent(0.123, "abs", 1.5, 0.25), ContactEvent(1.0, "slope", -2.0, 0.0)]
    assert events_from_csv(events_to_csv(ev)) == ev


@pytest.mark.parametrize("period", [0.05, 0.2, 0.5])
def test_apparent_period_of_square_wave(period):
    t = np.arange(0, 5, DT)
    x = (np.mod(t, period) < period / 2).astype(float) + 0.01 * t
    assert apparent_period(x, DT) == pytest.approx(period, abs=2 * DT)


def test_constant_trace_has_no_period():
    with pytest.raises(PeriodNotRecoverable):
        apparent_period(np.full(1000, 0.4), DT)


def test_noise_has_no_period():
    x = np.random.default_rng(0).normal(size=3000)
    with pytest.raises(PeriodNotRecoverable):
        apparent_period(x, DT)


@pytest.mark.parametrize("lag", [0, 7, 40])
def test_delay_of_shifted_signal(lag):
    rng = np.random.default_rng(lag)
    s = np.cumsum(rng.normal(size=800))
    obs = np.r_[np.full(lag, s[0]), s[: len(s) - lag]]
    assert xcorr_delay(s, obs, DT) == pytest.approx(lag * DT)


def test_rise_time_of_first_order_response():
    tau = 0.02
    t = np.arange(0, 1, DT)
    y = 1 - np.exp(-t / tau)
    assert rise_time(y, DT, 0) == pytest.approx(tau * np.log(9), abs=DT)


def test_rise_time_of_flat_signal_is_zero():
    assert rise_time(np.ones(100), DT, 10) == 0.0
