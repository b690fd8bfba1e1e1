import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinres.drive import (
    Section,
    SectionSchedule,
    Waveform,
    build_schedule,
    drive_at,
    ku_sin,
    ku_square,
    schedule_from_text,
)

T0 = 0.4e-9
KU_H, KU_L = 10e3, 1e3
# four-term square series at phase zero: 5.5 + 4.5 * (1 - 1/3 + 1/5 - 1/7) kJ/m3
SQUARE_AT_0 = 5.5e3 + 4.5e3 * (1 - 1 / 3 + 1 / 5 - 1 / 7)


def test_sin_values():
    assert ku_sin(0.0, T0, KU_H, KU_L) == pytest.approx(10e3)
    assert ku_sin(T0 / 4, T0, KU_H, KU_L) == pytest.approx(5.5e3)
    assert ku_sin(T0 / 2, T0, KU_H, KU_L) == pytest.approx(1e3)


def test_square_values():
    assert ku_square(0.0, T0, KU_H, KU_L) == pytest.approx(SQUARE_AT_0)
    assert SQUARE_AT_0 == pytest.approx(8757.142857, rel=1e-9)
    # antisymmetric about the mean across half a period
    assert ku_square(T0 / 2, T0, KU_H, KU_L) == pytest.approx(11e3 - SQUARE_AT_0)


def test_square_mean_over_period():
    # all harmonics average to zero over a full period of equally spaced samples
    t = np.arange(1000) * (T0 / 1000)
    vals = np.array([ku_square(ti, T0, KU_H, KU_L) for ti in t])
    assert vals.mean() == pytest.approx(5.5e3, rel=1e-12)


def test_square_overshoot_bound():
    # truncated Fourier ringing stays within 0.3 * (KU_H - KU_L) of the rails
    t = np.linspace(0, T0, 20001)
    vals = np.array([ku_square(ti, T0, KU_H, KU_L) for ti in t])
    span = KU_H - KU_L
    assert vals.max() <= KU_H + 0.3 * span
    assert vals.min() >= KU_L - 0.3 * span


@given(st.floats(min_value=0.0, max_value=10 * T0))
@settings(max_examples=50, deadline=None)
def test_waveforms_periodic(t):
    assert ku_sin(t + T0, T0, KU_H, KU_L) == pytest.approx(ku_sin(t, T0, KU_H, KU_L), abs=1e-6)
    assert ku_square(t + T0, T0, KU_H, KU_L) == pytest.approx(
        ku_square(t, T0, KU_H, KU_L), abs=1e-6
    )


def test_build_schedule_paper_shape():
    sched = build_schedule(15, 1280, 0.01e-9, T0, seed=1)
    assert len(sched.sections) == 15
    assert sched.total_steps == 19200
    assert round(T0 / 0.01e-9) == 40  # drive period in macro steps


def test_schedule_deterministic():
    a = build_schedule(15, 1280, 0.01e-9, T0, seed=1)
    b = build_schedule(15, 1280, 0.01e-9, T0, seed=1)
    assert a == b
    c = build_schedule(15, 1280, 0.01e-9, T0, seed=2)
    assert [s.label for s in a.sections] != [s.label for s in c.sections]


def test_schedule_validation():
    with pytest.raises(ValueError):
        build_schedule(0, 1280, 0.01e-9, T0, seed=1)
    with pytest.raises(ValueError):
        build_schedule(3, 0, 0.01e-9, T0, seed=1)


def _two_section_schedule():
    return SectionSchedule(
        sections=(Section(Waveform.SIN, 80), Section(Waveform.SQUARE, 80)),
        t0=0.01e-9,
        period=T0,
        ku_high=KU_H,
        ku_low=KU_L,
    )


def test_drive_at_section_starts():
    sched = _two_section_schedule()
    val, label, idx = drive_at(sched, 0.0)
    assert (val, label, idx) == (pytest.approx(10e3), Waveform.SIN, 0)
    # phase resets at the section boundary
    val, label, idx = drive_at(sched, 80 * sched.t0)
    assert label == Waveform.SQUARE and idx == 1
    assert val == pytest.approx(SQUARE_AT_0)


def test_drive_at_is_pure_and_bounded():
    sched = _two_section_schedule()
    for t in (0.0, 13 * sched.t0, 79 * sched.t0, 100 * sched.t0):
        assert drive_at(sched, t) == drive_at(sched, t)
    with pytest.raises(ValueError):
        drive_at(sched, -1e-12)
    with pytest.raises(ValueError):
        drive_at(sched, sched.total_time)


def test_drive_at_matches_labels():
    sched = build_schedule(5, 40, 0.01e-9, T0, seed=7)
    labels = sched.step_labels()
    for step in (0, 39, 40, 119, 199):
        _, label, _ = drive_at(sched, step * sched.t0)
        assert int(label) == labels[step]


def test_schedule_text_roundtrip():
    sched = build_schedule(6, 160, 0.01e-9, T0, seed=3)
    text = sched.to_text()
    back = schedule_from_text(text, sched.t0, sched.period, ku_high=KU_H, ku_low=KU_L)
    assert back.sections == sched.sections


def test_section_lookup_boundaries():
    sched = _two_section_schedule()
    assert sched.section_at(0.0) == 0
    assert sched.section_at(79 * sched.t0) == 0
    assert sched.section_at(80 * sched.t0) == 1
    assert np.array_equal(sched.boundaries(), [0, 80, 160])
    ids = sched.section_ids()
    assert ids[79] == 0 and ids[80] == 1 and len(ids) == 160
