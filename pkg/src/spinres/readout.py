"""Envelope feature extraction, linear readout training, and metrics.

The reservoir output s_x(r, n) is reduced per electrode to a causal
amplitude envelope (dc offset removed, then sqrt(2) times the RMS over a
trailing one-period window). A single output neuron applies trained
weights and a sigmoid; training inverts the sigmoid on clamped 0/1
teacher targets and solves the linear system with a pseudoinverse.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.ndimage
import scipy.sparse.linalg

from .drive import SectionSchedule
from .llg import SpinTrace

CLAMP = (0.001, 0.999)


@dataclass
class FeatureMatrix:
    """Envelope features, one row per output electrode, one column per
    macro step. warmup_mask flags steps whose trailing window crosses a
    section boundary; training and metrics skip them."""

    values: np.ndarray  # (n_o, n_steps) float64, non-negative
    electrode_ids: np.ndarray  # (n_o, 2) int, (ix, iy)
    step_labels: np.ndarray  # (n_steps,) int8, Waveform value
    warmup_mask: np.ndarray  # (n_steps,) bool, True = excluded
    section_ids: np.ndarray | None = None  # (n_steps,) int32

    @property
    def n_electrodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def select(self, rows: np.ndarray) -> "FeatureMatrix":
        """Row subset sharing the time axis (e.g. one electrode layout
        sliced out of the full-region features)."""
        return FeatureMatrix(
            values=self.values[rows],
            electrode_ids=self.electrode_ids[rows],
            step_labels=self.step_labels,
            warmup_mask=self.warmup_mask,
            section_ids=self.section_ids,
        )


@dataclass
class ReadoutModel:
    w_out: np.ndarray  # (n_o,) float64
    activation: str = "sigmoid"
    clamp: tuple = CLAMP


def sigmoid(u):
    return 1.0 / (1.0 + np.exp(-np.asarray(u, dtype=np.float64)))


def logit(y):
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0.0) or np.any(y >= 1.0):
        raise ValueError("logit input must lie strictly inside (0, 1); clamp first")
    return np.log(y / (1.0 - y))


def _trailing_rms(d: np.ndarray, window: int) -> np.ndarray:
    """Per-row RMS over the trailing `window` samples (shorter prefix
    windows use all available samples)."""
    sq = d * d
    c = np.cumsum(sq, axis=1)
    out = np.empty_like(c)
    out[:, :window] = c[:, :window] / np.arange(1, min(window, c.shape[1]) + 1)
    if c.shape[1] > window:
        out[:, window:] = (c[:, window:] - c[:, :-window]) / window
    return np.sqrt(np.maximum(out, 0.0))


def _trailing_peak(d: np.ndarray, window: int) -> np.ndarray:
    # positive origin shifts the filter window backwards in time, making
    # the window at step n cover [n - window + 1, n]
    return scipy.ndimage.maximum_filter1d(
        np.abs(d), size=window, axis=1, mode="nearest", origin=(window - 1) // 2
    )


def envelope(
    trace: SpinTrace,
    offsets: np.ndarray,
    window_steps: int,
    schedule: SectionSchedule,
    mode: str = "rms",
) -> FeatureMatrix:
    """Envelope features from a probe trace.

    offsets: per-probe dc component s_x(r, 0), removed before amplitude
    extraction. mode "rms" is sqrt(2) * trailing-window RMS (exact for
    sinusoids when the window spans whole periods); "peak" is the trailing
    -window maximum of |s_x - offset|.
    """
    if window_steps < 1:
        raise ValueError("window_steps must be >= 1")
    if trace.n_steps < window_steps:
        raise ValueError(
            f"trace has {trace.n_steps} steps, shorter than the {window_steps}-step window"
        )
    if trace.n_steps != schedule.total_steps:
        raise ValueError("trace length does not match the schedule")

    d = trace.samples.astype(np.float64) - np.asarray(offsets, dtype=np.float64).reshape(-1, 1)
    if mode == "rms":
        x = np.sqrt(2.0) * _trailing_rms(d, window_steps)
    elif mode == "peak":
        x = _trailing_peak(d, window_steps)
    else:
        raise ValueError(f"unknown envelope mode {mode!r}")

    labels = schedule.step_labels()
    section_ids = schedule.section_ids()
    mask = np.zeros(schedule.total_steps, dtype=bool)
    for start in schedule.boundaries()[:-1]:
        mask[start : start + window_steps] = True
    return FeatureMatrix(
        values=x,
        electrode_ids=trace.probes.copy(),
        step_labels=labels,
        warmup_mask=mask,
        section_ids=section_ids,
    )


def concat_features(parts: list[FeatureMatrix]) -> FeatureMatrix:
    """Concatenate feature matrices along time (same electrodes), keeping
    section ids distinct across parts."""
    ids0 = parts[0].electrode_ids
    for p in parts[1:]:
        if not np.array_equal(p.electrode_ids, ids0):
            raise ValueError("feature parts must share the same electrode set")
    sections = []
    offset = 0
    for p in parts:
        sections.append(p.section_ids + offset)
        offset += int(p.section_ids.max()) + 1
    return FeatureMatrix(
        values=np.hstack([p.values for p in parts]),
        electrode_ids=ids0,
        step_labels=np.concatenate([p.step_labels for p in parts]),
        warmup_mask=np.concatenate([p.warmup_mask for p in parts]),
        section_ids=np.concatenate(sections),
    )


def _pinv_weights(x: np.ndarray, z: np.ndarray, sv_rtol: float) -> np.ndarray:
    u, s, vt = scipy.linalg.svd(x, full_matrices=False)
    keep = s > sv_rtol * s[0]
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return ((z @ vt.T) * s_inv) @ u.T


def train_readout(
    features: FeatureMatrix,
    *,
    ridge: float = 0.0,
    sv_rtol: float = 1e-10,
    dense_limit: int = 8192,
    lsmr_atol: float = 1e-10,
    lsmr_maxiter: int = 1500,
) -> ReadoutModel:
    """Solve W = logit(Y_clamped) X^+ over the unmasked steps.

    The pseudoinverse is a thresholded SVD (singular values below
    sv_rtol * s_max dropped), giving the minimum-norm least-squares
    weights. Above dense_limit on the short matrix side the solve falls
    back to LSMR, which converges to the same minimum-norm solution.
    A positive ridge switches to regularized normal equations instead.
    """
    keep = ~features.warmup_mask
    x = features.values[:, keep]
    y = np.clip(features.step_labels[keep].astype(np.float64), CLAMP[0], CLAMP[1])
    n_o, n = x.shape
    if n == 0:
        raise ValueError("no unmasked steps available for training")
    if n < n_o:
        warnings.warn(
            f"only {n} training steps for {n_o} electrodes; solution is rank-deficient",
            stacklevel=2,
        )
    if not np.any(x):
        warnings.warn("all-zero feature matrix; returning zero weights", stacklevel=2)
        return ReadoutModel(w_out=np.zeros(n_o))

    z = logit(y)
    if ridge > 0.0:
        if n_o <= n:
            g = x @ x.T + ridge * np.eye(n_o)
            w = scipy.linalg.solve(g, x @ z, assume_a="pos")
        else:
            g = x.T @ x + ridge * np.eye(n)
            w = x @ scipy.linalg.solve(g, z, assume_a="pos")
    elif min(n_o, n) <= dense_limit:
        w = _pinv_weights(x, z, sv_rtol).ravel()
    else:
        # both dimensions huge (full-mesh runs): iterative minimum-norm
        # least squares on X^T w = z, memory bound by X itself
        op = scipy.sparse.linalg.aslinearoperator(x.T)
        res = scipy.sparse.linalg.lsmr(op, z, atol=lsmr_atol, btol=lsmr_atol, maxiter=lsmr_maxiter)
        w = res[0]
    return ReadoutModel(w_out=np.asarray(w, dtype=np.float64).ravel())


def predict(model: ReadoutModel, features) -> np.ndarray:
    """Neuron output per step, sigmoid(W x(n)), in (0, 1)."""
    x = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
    if x.shape[0] != model.w_out.shape[0]:
        raise ValueError(
            f"feature rows ({x.shape[0]}) do not match weight count ({model.w_out.shape[0]})"
        )
    return sigmoid(model.w_out @ x)


@dataclass(frozen=True)
class EvalResult:
    rmse: float
    correct_rate: float
    correct_rate_settled: float
    n_steps: int


def evaluate(
    yhat: np.ndarray,
    labels: np.ndarray,
    mask: np.ndarray,
    section_ids: np.ndarray | None = None,
    settle_steps: int = 300,
) -> EvalResult:
    """RMSE against raw 0/1 targets and the 0.5-threshold decision rate
    over unmasked steps. The settled rate additionally ignores the first
    settle_steps of every section, where switching transients live."""
    yhat = np.asarray(yhat, dtype=np.float64)
    labels = np.asarray(labels)
    if yhat.shape != labels.shape:
        raise ValueError("prediction and label lengths differ")
    keep = ~np.asarray(mask, dtype=bool)
    if not keep.any():
        raise ValueError("all steps are masked; nothing to evaluate")

    target = labels.astype(np.float64)
    correct = np.where(labels == 1, yhat > 0.5, yhat <= 0.5)
    rmse = float(np.sqrt(np.mean((yhat[keep] - target[keep]) ** 2)))
    rate = float(np.mean(correct[keep]))

    settled_rate = rate
    if section_ids is not None:
        settled = keep.copy()
        for sec in np.unique(section_ids):
            idx = np.nonzero(section_ids == sec)[0]
            settled[idx[: min(settle_steps, len(idx))]] = False
        if settled.any():
            settled_rate = float(np.mean(correct[settled]))
    return EvalResult(
        rmse=rmse,
        correct_rate=rate,
        correct_rate_settled=settled_rate,
        n_steps=int(keep.sum()),
    )
