"""Input drive: anisotropy waveforms and section schedules.

The input signal modulates the uniaxial anisotropy K_U under both input
electrodes between ku_high and ku_low. Two waveform classes exist: a pure
cosine, and a square wave approximated by its first four Fourier terms.
A schedule is a sequence of fixed-length sections, each carrying one
waveform class; the phase restarts at every section boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Waveform(IntEnum):
    SIN = 0
    SQUARE = 1


@dataclass(frozen=True)
class Section:
    label: Waveform
    length_steps: int


@dataclass(frozen=True)
class SectionSchedule:
    """Ordered waveform sections on the macro-step time grid."""

    sections: tuple[Section, ...]
    t0: float  # macro step, s
    period: float  # drive fundamental period, s
    ku_high: float = 10e3
    ku_low: float = 1e3
    seed: int | None = None

    @property
    def total_steps(self) -> int:
        return sum(s.length_steps for s in self.sections)

    @property
    def total_time(self) -> float:
        return self.total_steps * self.t0

    def boundaries(self) -> np.ndarray:
        """Cumulative start step of each section plus the final end step."""
        return np.concatenate([[0], np.cumsum([s.length_steps for s in self.sections])])

    def section_at(self, t: float) -> int:
        if t < 0 or t >= self.total_time:
            raise ValueError(f"time {t} outside schedule span [0, {self.total_time})")
        step = t / self.t0
        bounds = self.boundaries()
        idx = int(np.searchsorted(bounds, step, side="right")) - 1
        return min(idx, len(self.sections) - 1)

    def step_labels(self) -> np.ndarray:
        """Waveform label per macro step, int8."""
        return np.concatenate(
            [np.full(s.length_steps, int(s.label), dtype=np.int8) for s in self.sections]
        )

    def section_ids(self) -> np.ndarray:
        """Section index per macro step."""
        return np.concatenate(
            [np.full(s.length_steps, i, dtype=np.int32) for i, s in enumerate(self.sections)]
        )

    def to_text(self) -> str:
        lines = [f"{s.label.name} {s.length_steps}" for s in self.sections]
        return "\n".join(lines) + "\n"


def schedule_from_text(text: str, t0: float, period: float, **kw) -> SectionSchedule:
    sections = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        name, n = line.split()
        sections.append(Section(Waveform[name], int(n)))
    return SectionSchedule(sections=tuple(sections), t0=t0, period=period, **kw)


def ku_sin(t: float, period: float, ku_high: float, ku_low: float) -> float:
    """Cosine anisotropy waveform; starts at ku_high, dips to ku_low."""
    mid = 0.5 * (ku_high + ku_low)
    amp = 0.5 * (ku_high - ku_low)
    return mid + amp * math.cos(2.0 * math.pi * t / period)


def ku_square(t: float, period: float, ku_high: float, ku_low: float) -> float:
    """Square anisotropy waveform, four-term Fourier approximation."""
    mid = 0.5 * (ku_high + ku_low)
    amp = 0.5 * (ku_high - ku_low)
    w = 2.0 * math.pi * t / period
    s = (
        math.cos(w)
        - math.cos(3.0 * w) / 3.0
        + math.cos(5.0 * w) / 5.0
        - math.cos(7.0 * w) / 7.0
    )
    return mid + amp * s


_WAVEFORM_FN = {Waveform.SIN: ku_sin, Waveform.SQUARE: ku_square}


def waveform_value(label: Waveform, t_local: float, period: float, ku_high: float, ku_low: float) -> float:
    return _WAVEFORM_FN[Waveform(label)](t_local, period, ku_high, ku_low)


def build_schedule(
    n_sections: int,
    length_steps: int,
    t0: float,
    period: float,
    seed: int,
    ku_high: float = 10e3,
    ku_low: float = 1e3,
) -> SectionSchedule:
    """Draw section labels i.i.d. uniform from {SIN, SQUARE}.

    Reproducible from the seed; train and test schedules should use
    distinct seeds.
    """
    if n_sections < 1:
        raise ValueError("n_sections must be >= 1")
    if length_steps < 1:
        raise ValueError("length_steps must be >= 1")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, 2, size=n_sections)
    sections = tuple(Section(Waveform(int(d)), length_steps) for d in draws)
    return SectionSchedule(
        sections=sections, t0=t0, period=period, ku_high=ku_high, ku_low=ku_low, seed=seed
    )


def drive_at(schedule: SectionSchedule, t: float) -> tuple[float, Waveform, int]:
    """Drive anisotropy at absolute time t: value, active label, section index.

    The waveform phase is measured from the start of the active section.
    Both input electrodes receive this same value.
    """
    idx = schedule.section_at(t)
    start = float(schedule.boundaries()[idx]) * schedule.t0
    sec = schedule.sections[idx]
    val = waveform_value(sec.label, t - start, schedule.period, schedule.ku_high, schedule.ku_low)
    return val, sec.label, idx
