"""Landau-Lifshitz-Gilbert dynamics on the film grid.

The effective field combines a 5-point exchange stencil (mirror
boundaries), per-cell uniaxial anisotropy along z, the external z field,
and a local thin-film demagnetization term -Ms*sz*z. Integration is
fixed-step classical RK4 with sub-stepping below each macro step t0,
renormalizing the spin length after every substep.

Plain numpy implementations of the field and the equation of motion are
kept alongside the fused numba kernel; they define the semantics and the
kernel is tested against them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from . import kernels
from .drive import SectionSchedule, Waveform
from .errors import IntegrationDivergedError, StabilityError
from .geometry import MU0, GridSpec, MaterialMap, MaterialParams, SpinField


@dataclass(frozen=True)
class FieldTerms:
    """Effective-field term switches. Disabled terms contribute zero."""

    exchange: bool = True
    anisotropy: bool = True
    zeeman: bool = True
    demag: bool = True


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    macro_step is the sampling interval t0 of the drive and the readout;
    each macro step is integrated with `substeps` internal RK4 steps.
    """

    macro_step: float = 0.01e-9  # s
    substeps: int = 25
    gamma: float = 1.7595e11  # rad / (s T)
    renormalize: bool = True
    threads: int = 0  # 0 = numba default

    def __post_init__(self):
        if self.macro_step <= 0:
            raise StabilityError("macro_step must be positive")
        if self.substeps < 1:
            raise StabilityError("substeps_per_macro must be >= 1")

    @property
    def dt(self) -> float:
        return self.macro_step / self.substeps


@dataclass
class SpinTrace:
    """s_x samples at probe cells, one column per macro step."""

    probes: np.ndarray  # (n_probes, 2) int, (ix, iy)
    samples: np.ndarray  # (n_probes, n_steps) float32
    t0: float

    @property
    def n_steps(self) -> int:
        return self.samples.shape[1]


def max_mode_frequency(grid: GridSpec, params: MaterialParams, gamma: float = 1.7595e11) -> float:
    """Analytic upper bound on the mode frequency (Hz) for the discrete
    grid: shortest-wavelength exchange mode plus the uniform field terms."""
    d = grid.cell_size
    h_exch = (2.0 * params.a_ex / (MU0 * params.ms)) * (8.0 / (d * d))
    h_anis = 2.0 * max(abs(params.ku_high), abs(params.ku_low)) / (MU0 * params.ms)
    h_max = h_exch + h_anis + params.ms + abs(params.h_ext)
    return gamma * MU0 * h_max / (2.0 * math.pi)


def check_stability(cfg: IntegratorConfig, grid: GridSpec, params: MaterialParams) -> None:
    """Enforce dt <= 0.5 / f_max for the grid's fastest exchange mode."""
    f_max = max_mode_frequency(grid, params, cfg.gamma)
    bound = 0.5 / f_max
    if cfg.dt > bound:
        raise StabilityError(
            f"substep dt = {cfg.dt:.3e} s exceeds the stability bound "
            f"{bound:.3e} s (max mode frequency {f_max:.3e} Hz); "
            f"increase substeps_per_macro above {math.ceil(cfg.macro_step / bound)}"
        )


def effective_field(
    state: SpinField,
    mat: MaterialMap,
    ku_now: np.ndarray | None = None,
    terms: FieldTerms = FieldTerms(),
    h_inplane: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Effective field planes (hx, hy, hz) in A/m. Reference implementation.

    ku_now is the instantaneous per-cell anisotropy (defaults to the static
    map). Exchange uses the 5-point Laplacian with mirror (Neumann) edges.
    h_inplane is the optional per-cell x-directed input-coupling field that
    accompanies an active drive.
    """
    p = mat.params
    ku = mat.ku_base if ku_now is None else ku_now

    def lap(a):
        ap = np.pad(a, 1, mode="edge")
        return ap[:-2, 1:-1] + ap[2:, 1:-1] + ap[1:-1, :-2] + ap[1:-1, 2:] - 4.0 * a

    cex = 2.0 * p.a_ex / (MU0 * p.ms * mat.grid.cell_size**2) if terms.exchange else 0.0
    hx = cex * lap(state.sx)
    hy = cex * lap(state.sy)
    hz = cex * lap(state.sz)
    if h_inplane is not None:
        hx = hx + h_inplane
    if terms.anisotropy:
        hz = hz + (2.0 * ku / (MU0 * p.ms)) * state.sz
    if terms.demag:
        hz = hz - p.ms * state.sz
    if terms.zeeman:
        hz = hz + p.h_ext
    return hx, hy, hz


def llg_rhs(
    state: SpinField,
    field: tuple[np.ndarray, np.ndarray, np.ndarray],
    alpha: np.ndarray,
    gamma: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ds/dt = -gamma*mu0/(1+alpha^2) * (s x H + alpha * s x (s x H))."""
    hx, hy, hz = field
    sx, sy, sz = state.sx, state.sy, state.sz
    px = sy * hz - sz * hy
    py = sz * hx - sx * hz
    pz = sx * hy - sy * hx
    qx = sy * pz - sz * py
    qy = sz * px - sx * pz
    qz = sx * py - sy * px
    pref = -gamma * MU0 / (1.0 + alpha**2)
    return pref * (px + alpha * qx), pref * (py + alpha * qy), pref * (pz + alpha * qz)


def energy(state: SpinField, mat: MaterialMap, ku_now: np.ndarray | None = None) -> float:
    """Total discrete energy (J): exchange pair terms, uniaxial anisotropy,
    local demag, and Zeeman. Consistent with effective_field, so Gilbert
    damping makes it non-increasing without drive."""
    p = mat.params
    ku = mat.ku_base if ku_now is None else ku_now
    v = mat.grid.cell_volume
    d2 = mat.grid.cell_size**2
    sx, sy, sz = state.sx, state.sy, state.sz

    ex = 0.0
    for a in (sx, sy, sz):
        ex += np.sum((a[:, 1:] - a[:, :-1]) ** 2) + np.sum((a[1:, :] - a[:-1, :]) ** 2)
    e_exch = p.a_ex * v / d2 * ex
    e_anis = -v * np.sum(ku * sz**2)
    e_demag = 0.5 * MU0 * p.ms**2 * v * np.sum(sz**2)
    e_zee = -MU0 * p.ms * p.h_ext * v * np.sum(sz)
    return float(e_exch + e_anis + e_demag + e_zee)


class LlgIntegrator:
    """Owns the precomputed coefficient planes and RK4 stage buffers for
    one material map. Not shareable across concurrent integrations."""

    def __init__(self, mat: MaterialMap, cfg: IntegratorConfig, terms: FieldTerms = FieldTerms()):
        check_stability(cfg, mat.grid, mat.params)
        self.mat = mat
        self.cfg = cfg
        self.terms = terms
        p = mat.params
        d2 = mat.grid.cell_size**2

        self._cex = 2.0 * p.a_ex / (MU0 * p.ms * d2) if terms.exchange else 0.0
        self._msd = p.ms if terms.demag else 0.0
        self._hext = p.h_ext if terms.zeeman else 0.0
        self._anis_scale = 2.0 / (MU0 * p.ms) if terms.anisotropy else 0.0
        self._pref = -cfg.gamma * MU0 / (1.0 + mat.alpha**2)
        self._canis = self._anis_scale * mat.ku_base.copy()
        self._ei = mat.electrode_iy if mat.electrode_iy is not None else np.zeros(0, np.int64)
        self._ej = mat.electrode_ix if mat.electrode_ix is not None else np.zeros(0, np.int64)
        self._dmask = np.zeros((mat.grid.ny, mat.grid.nx), dtype=np.float64)
        self._dmask[self._ei, self._ej] = 1.0
        self._bufs = kernels.make_buffers((mat.grid.ny, mat.grid.nx))
        self._no_drive = np.full((cfg.substeps, 3), p.ku_high, dtype=np.float64)
        self._no_hx = np.zeros((cfg.substeps, 3), dtype=np.float64)
        if cfg.threads > 0:
            numba.set_num_threads(cfg.threads)

    def stage_times(self, t: float) -> np.ndarray:
        """Distinct RK4 stage times per substep, shape (substeps, 3)."""
        dt = self.cfg.dt
        base = t + dt * np.arange(self.cfg.substeps)[:, None]
        return base + dt * np.array([0.0, 0.5, 1.0])

    def drive_tilt(self, drive_ku: np.ndarray) -> np.ndarray:
        """In-plane coupling field for the given anisotropy drive: scales
        with the modulation depth, zero at the resting anisotropy."""
        p = self.mat.params
        span = p.ku_high - p.ku_low
        if span <= 0 or p.drive_inplane == 0.0:
            return np.zeros_like(drive_ku)
        return p.drive_inplane * (p.ku_high - drive_ku) / span

    def step(self, state: SpinField, step_index: int, drive_ku: np.ndarray | None = None) -> SpinField:
        """Advance one macro step in place.

        drive_ku: electrode anisotropy (J/m^3) at the stage times,
        shape (substeps, 3); None keeps the resting value everywhere.
        """
        if drive_ku is None:
            dk, dhx = self._no_drive, self._no_hx
        else:
            dk = np.ascontiguousarray(drive_ku, dtype=np.float64)
            dhx = self.drive_tilt(dk)
        kernels.rk4_macro_step(
            state.sx, state.sy, state.sz,
            self._pref, self.mat.alpha, self._canis, self._dmask,
            self._cex, self._msd, self._hext,
            self._ei, self._ej, self._anis_scale * dk, dhx,
            self.cfg.dt, self.cfg.renormalize,
            *self._bufs,
        )
        if not (
            np.isfinite(state.sx).all()
            and np.isfinite(state.sy).all()
            and np.isfinite(state.sz).all()
        ):
            raise IntegrationDivergedError(step_index)
        return state


def step_macro(
    state: SpinField,
    mat: MaterialMap,
    ku_provider,
    t: float,
    cfg: IntegratorConfig,
    terms: FieldTerms = FieldTerms(),
) -> SpinField:
    """One macro step, functional form: returns a new SpinField.

    ku_provider maps a time (s) to the electrode anisotropy (J/m^3);
    None leaves the anisotropy at its resting value.
    """
    integ = LlgIntegrator(mat, cfg, terms)
    out = state.copy()
    drive = None
    if ku_provider is not None:
        times = integ.stage_times(t)
        drive = np.vectorize(ku_provider)(times)
    return integ.step(out, int(round(t / cfg.macro_step)), drive)


def section_drive(sched: SectionSchedule, sec_index: int, cfg: IntegratorConfig) -> np.ndarray:
    """Electrode K_U at every RK stage time of one section, vectorized.

    Shape (section_steps, substeps, 3); phase is section-local.
    """
    sec = sched.sections[sec_index]
    dt = cfg.dt
    stage = dt * np.arange(cfg.substeps)[:, None] + dt * np.array([0.0, 0.5, 1.0])
    local = cfg.macro_step * np.arange(sec.length_steps)[:, None, None] + stage[None, :, :]
    w = 2.0 * math.pi * local / sched.period
    mid = 0.5 * (sched.ku_high + sched.ku_low)
    amp = 0.5 * (sched.ku_high - sched.ku_low)
    if sec.label == Waveform.SIN:
        return mid + amp * np.cos(w)
    return mid + amp * (
        np.cos(w) - np.cos(3 * w) / 3.0 + np.cos(5 * w) / 5.0 - np.cos(7 * w) / 7.0
    )


def run(
    state: SpinField,
    mat: MaterialMap,
    schedule: SectionSchedule,
    probes: np.ndarray,
    cfg: IntegratorConfig,
    snapshot_steps=(),
    snapshot_sink=None,
    terms: FieldTerms = FieldTerms(),
) -> tuple[SpinTrace, list]:
    """Integrate a full drive schedule, sampling s_x at the probe cells
    after every macro step.

    probes: (n, 2) array of (ix, iy) cell indices; may be empty.
    snapshot_steps: macro-step indices at which the full s_x plane is
    exported. Frames go to snapshot_sink(step, frame) when given,
    otherwise they are collected and returned.
    """
    if abs(schedule.t0 - cfg.macro_step) > 1e-18:
        raise ValueError("schedule t0 must equal the integrator macro step")
    probes = np.asarray(probes, dtype=np.int64).reshape(-1, 2)
    if probes.size and (
        probes[:, 0].min() < 0
        or probes[:, 1].min() < 0
        or probes[:, 0].max() >= mat.grid.nx
        or probes[:, 1].max() >= mat.grid.ny
    ):
        raise ValueError("probe cell outside the grid")
    pj, pi = probes[:, 0], probes[:, 1]

    integ = LlgIntegrator(mat, cfg, terms)
    n_steps = schedule.total_steps
    samples = np.empty((len(probes), n_steps), dtype=np.float32)
    want = set(int(s) for s in snapshot_steps)
    frames = []

    n = 0
    for si in range(len(schedule.sections)):
        drive = section_drive(schedule, si, integ.cfg)
        for k in range(schedule.sections[si].length_steps):
            integ.step(state, n, drive[k])
            if len(probes):
                samples[:, n] = state.sx[pi, pj]
            if n in want:
                frame = state.sx.astype(np.float32)
                if snapshot_sink is not None:
                    snapshot_sink(n, frame)
                else:
                    frames.append((n, frame))
            n += 1
    return SpinTrace(probes=probes, samples=samples, t0=cfg.macro_step), frames


def relax(
    state: SpinField,
    mat: MaterialMap,
    cfg: IntegratorConfig,
    max_steps: int = 2000,
    tol: float = 1e3,
) -> SpinField:
    """Drive-free integration with damping raised to >= 0.5 until the
    maximum per-cell |ds/dt| drops below tol (1/s). Returns the best state
    reached, warning if max_steps was not enough."""
    relax_alpha = np.maximum(mat.alpha, 0.5)
    relax_mat = MaterialMap(
        grid=mat.grid,
        params=mat.params,
        alpha=relax_alpha,
        ku_base=mat.ku_base,
        region=mat.region,
        electrode_iy=mat.electrode_iy,
        electrode_ix=mat.electrode_ix,
    )
    out = state.copy()

    def max_rate(s):
        f = effective_field(s, relax_mat)
        dx, dy, dz = llg_rhs(s, f, relax_alpha, cfg.gamma)
        return float(np.sqrt(dx**2 + dy**2 + dz**2).max())

    if max_rate(out) < tol:
        return out
    integ = LlgIntegrator(relax_mat, cfg)
    for n in range(max_steps):
        integ.step(out, n)
        if max_rate(out) < tol:
            return out
    warnings.warn(
        f"relaxation did not converge within {max_steps} macro steps "
        f"(residual rate {max_rate(out):.3e} 1/s)",
        stacklevel=2,
    )
    return out
