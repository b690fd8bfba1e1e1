"""End-to-end experiment pipelines and reporting.

The expensive part of every experiment is the film simulation, so each
(schedule, repeat) is simulated once with probes covering the whole
compartment area; every electrode arrangement is then a row slice of that
shared trace. Reports collect per-run records plus mean/std aggregates
and are written incrementally so partial results survive failures.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, io, layout
from .config import ExperimentConfig, resolved_text
from .drive import Section, SectionSchedule, Waveform, build_schedule
from .errors import GeometryError
from .geometry import (
    MaterialMap,
    Rect,
    RegionSpec,
    SpinField,
    build_geometry,
    build_regions,
    initial_state,
)
from .layout import ElectrodeSet, layout_rows
from .llg import SpinTrace, relax, run
from .readout import (
    FeatureMatrix,
    ReadoutModel,
    _trailing_peak,
    _trailing_rms,
    concat_features,
    evaluate,
    predict,
    train_readout,
)

_FEATURE_CHUNK = 2048  # probe rows per envelope chunk (memory bound)


@dataclass
class RunRecord:
    experiment: str
    arrangement: str
    n_o: int
    rmse: float
    correct_rate: float
    correct_rate_settled: float
    compartment: int | None = None
    freq_ghz: float | None = None
    waveform: str | None = None
    layout_seed: int | None = None
    train_seed: int | None = None
    test_seed: int | None = None

    CSV_FIELDS = (
        "experiment", "arrangement", "n_o", "compartment", "freq_ghz", "waveform",
        "layout_seed", "train_seed", "test_seed",
        "rmse", "correct_rate", "correct_rate_settled",
    )

    def csv_row(self) -> list:
        out = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            out.append("" if v is None else (io.format_float(v) if isinstance(v, float) else str(v)))
        return out

    @classmethod
    def from_csv_row(cls, row: list[str]) -> "RunRecord":
        kw = {}
        for name, text in zip(cls.CSV_FIELDS, row):
            if text == "":
                kw[name] = None
            elif name in ("rmse", "correct_rate", "correct_rate_settled", "freq_ghz"):
                kw[name] = float(text)
            elif name in ("experiment", "arrangement", "waveform"):
                kw[name] = text
            else:
                kw[name] = int(text)
        return cls(**kw)


_GROUP_KEYS = ("experiment", "arrangement", "n_o", "compartment", "freq_ghz", "waveform")
_METRICS = ("rmse", "correct_rate", "correct_rate_settled")


def aggregate_records(records: list[RunRecord]) -> list[dict]:
    """Mean and sample std of each metric per experiment group."""
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        key = tuple(getattr(rec, k) for k in _GROUP_KEYS)
        groups.setdefault(key, []).append(rec)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        rows = groups[key]
        agg = dict(zip(_GROUP_KEYS, key))
        agg["n_runs"] = len(rows)
        for m in _METRICS:
            vals = np.array([getattr(r, m) for r in rows], dtype=np.float64)
            agg[f"mean_{m}"] = float(vals.mean())
            agg[f"std_{m}"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        out.append(agg)
    return out


@dataclass
class ExperimentReport:
    records: list = field(default_factory=list)
    config_hash: str = ""
    version: str = __version__

    def aggregates(self) -> list[dict]:
        return aggregate_records(self.records)

    def select(self, **criteria) -> list[RunRecord]:
        out = []
        for rec in self.records:
            if all(getattr(rec, k) == v for k, v in criteria.items()):
                out.append(rec)
        return out

    def group_stats(self, metric: str, **criteria) -> tuple[float, float, int]:
        vals = np.array([getattr(r, metric) for r in self.select(**criteria)])
        if len(vals) == 0:
            raise ValueError(f"no records match {criteria}")
        std = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        return float(vals.mean()), std, len(vals)

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        io.write_csv(
            out_dir / "records.csv",
            list(RunRecord.CSV_FIELDS),
            (r.csv_row() for r in self.records),
        )
        self._write_aggregates(out_dir / "aggregates.csv")
        (out_dir / "provenance.txt").write_text(
            f"version = spinres-{self.version}\nconfig_hash = {self.config_hash}\n"
        )

    def _write_aggregates(self, path) -> None:
        aggs = self.aggregates()
        header = list(_GROUP_KEYS) + ["n_runs"] + [
            f"{s}_{m}" for m in _METRICS for s in ("mean", "std")
        ]
        rows = []
        for a in aggs:
            row = []
            for k in header:
                v = a.get(k)
                row.append("" if v is None else (io.format_float(v) if isinstance(v, float) else str(v)))
            rows.append(row)
        io.write_csv(path, header, rows)

    @classmethod
    def load(cls, out_dir) -> "ExperimentReport":
        """Re-read a saved report, verifying the stored aggregates match
        a recomputation from the records."""
        out_dir = Path(out_dir)
        _, rows = io.read_csv(out_dir / "records.csv")
        report = cls(records=[RunRecord.from_csv_row(r) for r in rows])
        header, agg_rows = io.read_csv(out_dir / "aggregates.csv")
        fresh = report.aggregates()
        if len(agg_rows) != len(fresh):
            raise ValueError("aggregates.csv does not match the records")
        for row, ref in zip(agg_rows, fresh):
            for name, text in zip(header, row):
                want = ref.get(name)
                if want is None or isinstance(want, str):
                    if text != ("" if want is None else str(want)):
                        raise ValueError(f"aggregate field {name} mismatch: {text!r} vs {want!r}")
                else:
                    if abs(float(text) - float(want)) > 1e-9 * max(1.0, abs(float(want))):
                        raise ValueError(f"aggregate field {name} mismatch: {text} vs {want}")
        return report


@dataclass
class ReservoirRun:
    """One simulated schedule: s_x trace over a probe rectangle plus the
    relaxed-state offsets. Arrangements slice rows out of it."""

    schedule: SectionSchedule
    rect: Rect
    trace: SpinTrace
    offsets: np.ndarray  # (n_probes,)
    window: int
    warmup_windows: int = 1
    envelope_mode: str = "rms"

    def features_for(self, electrodes: ElectrodeSet) -> FeatureMatrix:
        """Envelope features for one arrangement (chunked over rows)."""
        rows = layout_rows(self.rect, electrodes)
        n = self.trace.n_steps
        vals = np.empty((len(rows), n), dtype=np.float64)
        for lo in range(0, len(rows), _FEATURE_CHUNK):
            sel = rows[lo : lo + _FEATURE_CHUNK]
            d = self.trace.samples[sel].astype(np.float64) - self.offsets[sel][:, None]
            if self.envelope_mode == "rms":
                vals[lo : lo + _FEATURE_CHUNK] = np.sqrt(2.0) * _trailing_rms(d, self.window)
            else:
                vals[lo : lo + _FEATURE_CHUNK] = _trailing_peak(d, self.window)

        mask = np.zeros(n, dtype=bool)
        warm = self.window * self.warmup_windows
        for start in self.schedule.boundaries()[:-1]:
            mask[start : start + warm] = True
        return FeatureMatrix(
            values=vals,
            electrode_ids=electrodes.positions.copy(),
            step_labels=self.schedule.step_labels(),
            warmup_mask=mask,
            section_ids=self.schedule.section_ids(),
        )


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(resolved_text(config).encode()).hexdigest()[:16]


def make_schedule(config: ExperimentConfig, n_sections: int, seed: int,
                  frequency: float | None = None) -> SectionSchedule:
    sched = config.schedule
    return build_schedule(
        n_sections=n_sections,
        length_steps=sched.section_steps,
        t0=config.integrator.macro_step,
        period=1.0 / (frequency if frequency is not None else sched.frequency),
        seed=seed,
        ku_high=config.material.ku_high,
        ku_low=config.material.ku_low,
    )


def schedule_seed_pair(config: ExperimentConfig, repeat: int) -> tuple[int, int]:
    return config.schedule.train_seed + 2 * repeat, config.schedule.test_seed + 2 * repeat


def simulate_run(
    config: ExperimentConfig,
    schedule: SectionSchedule,
    mat: MaterialMap | None = None,
    regions: RegionSpec | None = None,
    relaxed: SpinField | None = None,
    snapshot_steps=(),
    snapshot_sink=None,
    frequency: float | None = None,
) -> ReservoirRun:
    """Relax the film and integrate one schedule, probing the whole
    compartment area (superset of every arrangement region)."""
    mat = mat or build_geometry(config.grid, config.material)
    regions = regions or build_regions(config.grid, config.material)
    state = (relaxed or relax(initial_state(mat), mat, config.integrator)).copy()
    offsets_plane = state.sx.copy()

    rect = regions.compartment_area
    probes = rect.cells()
    trace, _ = run(
        state, mat, schedule, probes, config.integrator,
        snapshot_steps=snapshot_steps, snapshot_sink=snapshot_sink,
    )
    offsets = offsets_plane[probes[:, 1], probes[:, 0]]
    return ReservoirRun(
        schedule=schedule,
        rect=rect,
        trace=trace,
        offsets=offsets,
        window=config.window_steps(frequency),
        warmup_windows=config.readout.warmup_windows,
        envelope_mode=config.readout.envelope_mode,
    )


def make_layout(
    regions: RegionSpec,
    arrangement: str,
    n_o: int,
    seed: int | None = None,
    compartment: int | None = None,
) -> ElectrodeSet:
    arrangement = arrangement.upper()
    if arrangement == layout.FULL:
        return layout.full_layout(regions)
    if arrangement == layout.GRID:
        return layout.grid_layout(regions, n_o)
    if arrangement == layout.CIRCLE:
        return layout.circle_layout(regions, n_o)
    if arrangement == layout.RANDOM:
        if seed is None:
            raise GeometryError("random arrangement needs a layout seed")
        return layout.random_layout(regions, n_o, seed)
    if arrangement == layout.COMPARTMENT:
        if compartment is None:
            raise GeometryError("compartment arrangement needs a compartment index")
        return layout.compartment_layout(regions, compartment, n_o)
    raise GeometryError(f"unknown arrangement {arrangement!r}")


def classify_once(
    train_run: ReservoirRun,
    test_run: ReservoirRun,
    electrodes: ElectrodeSet,
    *,
    ridge: float = 0.0,
    settle_steps: int = 300,
) -> tuple[RunRecord, ReadoutModel]:
    feats = train_run.features_for(electrodes)
    with warnings.catch_warnings():
        # full-mesh runs have more electrodes than steps by design
        warnings.filterwarnings("ignore", message="only .* training steps")
        model = train_readout(feats, ridge=ridge)
    test_feats = test_run.features_for(electrodes)
    result = evaluate(
        predict(model, test_feats),
        test_feats.step_labels,
        test_feats.warmup_mask,
        test_feats.section_ids,
        settle_steps=settle_steps,
    )
    rec = RunRecord(
        experiment="classify",
        arrangement=electrodes.arrangement,
        n_o=electrodes.n_o,
        compartment=electrodes.compartment,
        layout_seed=electrodes.seed,
        train_seed=train_run.schedule.seed,
        test_seed=test_run.schedule.seed,
        rmse=result.rmse,
        correct_rate=result.correct_rate,
        correct_rate_settled=result.correct_rate_settled,
    )
    return rec, model


def run_classification(
    config: ExperimentConfig,
    electrodes: ElectrodeSet | None = None,
    train_run: ReservoirRun | None = None,
    test_run: ReservoirRun | None = None,
) -> tuple[RunRecord, ReadoutModel, ReservoirRun, ReservoirRun]:
    """Full pipeline: relax, simulate train and test schedules, extract
    envelopes, train the readout, and evaluate on the test schedule.

    Pre-simulated runs can be passed in to reuse the traces.
    """
    regions = build_regions(config.grid, config.material)
    if electrodes is None:
        electrodes = make_layout(
            regions, config.arrangement, config.n_o, seed=config.sweep.layout_seed
        )
    if train_run is None or test_run is None:
        mat = build_geometry(config.grid, config.material)
        relaxed = relax(initial_state(mat), mat, config.integrator)
        if train_run is None:
            sched = make_schedule(config, config.schedule.n_train_sections, config.schedule.train_seed)
            train_run = simulate_run(config, sched, mat, regions, relaxed)
        if test_run is None:
            sched = make_schedule(config, config.schedule.n_test_sections, config.schedule.test_seed)
            test_run = simulate_run(config, sched, mat, regions, relaxed)
    rec, model = classify_once(
        train_run, test_run, electrodes,
        ridge=config.readout.ridge, settle_steps=config.readout.settle_steps,
    )
    return rec, model, train_run, test_run


class _RecordSink:
    """Streams records to records.csv as they are produced."""

    def __init__(self, out_dir, config: ExperimentConfig | None):
        self.report = ExperimentReport(config_hash=config_hash(config) if config else "")
        self.out_dir = Path(out_dir) if out_dir else None
        self._fh = None
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            if config is not None:
                (self.out_dir / "config.resolved").write_text(resolved_text(config))
            self._fh = open(self.out_dir / "records.csv", "w")
            self._fh.write(",".join(RunRecord.CSV_FIELDS) + "\n")
            self._fh.flush()

    def add(self, rec: RunRecord) -> None:
        self.report.records.append(rec)
        if self._fh:
            self._fh.write(",".join(rec.csv_row()) + "\n")
            self._fh.flush()

    def finish(self) -> ExperimentReport:
        if self._fh:
            self._fh.close()
            self._fh = None
            self.report._write_aggregates(self.out_dir / "aggregates.csv")
            (self.out_dir / "provenance.txt").write_text(
                f"version = spinres-{self.report.version}\n"
                f"config_hash = {self.report.config_hash}\n"
            )
        return self.report


def sweep_electrode_count(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Classification quality versus electrode count for each
    arrangement; every repeat re-draws the schedules (and, for the random
    arrangement, the electrode positions) and shares one simulation."""
    regions = build_regions(config.grid, config.material)
    mat = build_geometry(config.grid, config.material)
    relaxed = relax(initial_state(mat), mat, config.integrator)
    sink = _RecordSink(out_dir, config)
    try:
        for rep in range(config.sweep.repeats):
            tr_seed, te_seed = schedule_seed_pair(config, rep)
            train_run = simulate_run(
                config, make_schedule(config, config.schedule.n_train_sections, tr_seed),
                mat, regions, relaxed,
            )
            test_run = simulate_run(
                config, make_schedule(config, config.schedule.n_test_sections, te_seed),
                mat, regions, relaxed,
            )
            for arrangement in config.sweep.arrangements:
                for n_o in config.sweep.n_o_list:
                    if arrangement == layout.GRID and round(n_o**0.5) ** 2 != n_o:
                        continue  # grids exist only at square counts
                    electrodes = make_layout(
                        regions, arrangement, n_o, seed=config.sweep.layout_seed + rep
                    )
                    rec, _ = classify_once(
                        train_run, test_run, electrodes,
                        ridge=config.readout.ridge, settle_steps=config.readout.settle_steps,
                    )
                    rec.experiment = "sweep"
                    rec.train_seed, rec.test_seed = tr_seed, te_seed
                    sink.add(rec)
                    if out_dir and rep == 0:
                        _archive_electrodes(out_dir, electrodes)
    finally:
        report = sink.finish()
    return report


def sweep_compartments(config: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Grid layouts confined to each of the nine compartments."""
    regions = build_regions(config.grid, config.material)
    mat = build_geometry(config.grid, config.material)
    relaxed = relax(initial_state(mat), mat, config.integrator)
    sink = _RecordSink(out_dir, config)
    try:
        for rep in range(config.sweep.repeats):
            tr_seed, te_seed = schedule_seed_pair(config, rep)
            train_run = simulate_run(
                config, make_schedule(config, config.schedule.n_train_sections, tr_seed),
                mat, regions, relaxed,
            )
            test_run = simulate_run(
                config, make_schedule(config, config.schedule.n_test_sections, te_seed),
                mat, regions, relaxed,
            )
            for k in range(1, 10):
                for n_o in config.sweep.compartment_n_o_list:
                    electrodes = make_layout(regions, layout.COMPARTMENT, n_o, compartment=k)
                    rec, _ = classify_once(
                        train_run, test_run, electrodes,
                        ridge=config.readout.ridge, settle_steps=config.readout.settle_steps,
                    )
                    rec.experiment = "compartments"
                    rec.train_seed, rec.test_seed = tr_seed, te_seed
                    sink.add(rec)
                    if out_dir and rep == 0:
                        _archive_electrodes(out_dir, electrodes)
    finally:
        report = sink.finish()
    return report


def frequency_generalization(
    config: ExperimentConfig,
    train_freqs: tuple | None = None,
    test_freqs: tuple | None = None,
    out_dir=None,
) -> ExperimentReport:
    """Train one readout on features from two drive frequencies (one sin
    plus one square section each) and test across a frequency range.

    The envelope window tracks each frequency's period. The arrangement
    is the configured one (grid 81 unless overridden).
    """
    train_freqs = tuple(train_freqs if train_freqs is not None else config.sweep.train_freqs)
    test_freqs = tuple(test_freqs if test_freqs is not None else config.sweep.test_freqs)
    if not train_freqs or not test_freqs:
        raise ValueError("need at least one train and one test frequency")

    regions = build_regions(config.grid, config.material)
    mat = build_geometry(config.grid, config.material)
    relaxed = relax(initial_state(mat), mat, config.integrator)
    electrodes = make_layout(
        regions, config.arrangement, config.n_o, seed=config.sweep.layout_seed
    )

    def fixed_schedule(freq: float) -> SectionSchedule:
        return SectionSchedule(
            sections=(
                Section(Waveform.SIN, config.schedule.section_steps),
                Section(Waveform.SQUARE, config.schedule.section_steps),
            ),
            t0=config.integrator.macro_step,
            period=1.0 / freq,
            ku_high=config.material.ku_high,
            ku_low=config.material.ku_low,
        )

    runs: dict[float, ReservoirRun] = {}
    for freq in sorted(set(train_freqs) | set(test_freqs)):
        runs[freq] = simulate_run(
            config, fixed_schedule(freq), mat, regions, relaxed, frequency=freq
        )

    train_parts = [runs[f].features_for(electrodes) for f in train_freqs]
    model = train_readout(concat_features(train_parts), ridge=config.readout.ridge)

    sink = _RecordSink(out_dir, config)
    try:
        for freq in test_freqs:
            feats = runs[freq].features_for(electrodes)
            yhat = predict(model, feats)
            by_wave = {"all": np.ones(feats.n_steps, dtype=bool)}
            for wf in (Waveform.SIN, Waveform.SQUARE):
                by_wave[wf.name] = feats.step_labels == int(wf)
            for name, sel in by_wave.items():
                res = evaluate(
                    yhat[sel], feats.step_labels[sel], feats.warmup_mask[sel],
                    feats.section_ids[sel], settle_steps=config.readout.settle_steps,
                )
                sink.add(RunRecord(
                    experiment="freqgen",
                    arrangement=electrodes.arrangement,
                    n_o=electrodes.n_o,
                    freq_ghz=freq / 1e9,
                    waveform=name,
                    train_seed=config.schedule.train_seed,
                    rmse=res.rmse,
                    correct_rate=res.correct_rate,
                    correct_rate_settled=res.correct_rate_settled,
                ))
    finally:
        report = sink.finish()
    return report


def render_weight_map(model: ReadoutModel, electrodes: ElectrodeSet, regions: RegionSpec):
    """Readout weights of a full-mesh run as a diverging heatmap over the
    readout region. Returns (rgb image, weight grid)."""
    if electrodes.arrangement != layout.FULL:
        raise ValueError("weight maps need the FULL electrode arrangement")
    rect = regions.full_readout
    grid = np.asarray(model.w_out, dtype=np.float64).reshape(rect.h, rect.w)
    return io.diverging_rgb(grid), grid


def render_snapshot(frame: np.ndarray):
    """s_x snapshot frame as a diverging heatmap."""
    return io.diverging_rgb(np.asarray(frame, dtype=np.float64))


def _archive_electrodes(out_dir, electrodes: ElectrodeSet) -> None:
    ed = Path(out_dir) / "electrodes"
    ed.mkdir(parents=True, exist_ok=True)
    name = f"{electrodes.arrangement.lower()}_{electrodes.n_o}"
    if electrodes.compartment is not None:
        name += f"_c{electrodes.compartment}"
    if electrodes.seed is not None:
        name += f"_seed{electrodes.seed}"
    io.write_electrodes_csv(ed / f"{name}.csv", electrodes)
