"""Staged CNOT calibration: CR phase, rough cancellation, error-amplified fine loops, frame change.

Every stage talks to a *backend* that exposes

* ``cnot_channel(params)``: the 16x16 two-qubit superoperator of one gate, and
* ``cr_trajectories(params, flats)``: target Bloch trajectories for CR
  Hamiltonian tomography (only needed by :func:`calibrate_cr_phase`).

:class:`PulseBackend` runs the pulse simulator; :class:`ModelBackend` takes
plain callables and is meant for planted test devices.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .device import DeviceModel, PauliCoefficients
from .pulses import (
    FrameChange,
    Play,
    PulseSchedule,
    PulseSimulator,
    child_seed,
    make_cr_envelope,
    measurement_probabilities,
    sample_measurement,
)
from .quantum import (
    PAULIS,
    apply_superop,
    chi_from_unitary,
    process_fidelity,
    superop_from_unitary,
)
from .tomography import CRRabiExperiment, bloch_trajectory, fit_cr_hamiltonian, process_tomography

__all__ = [
    "CnotPulseParams",
    "CalibrationReport",
    "CalibrationError",
    "PulseBackend",
    "ModelBackend",
    "cnot_schedule",
    "calibrate_cr_phase",
    "calibrate_cancellation_rough",
    "fine_calibrate",
    "calibrate_frame_change",
    "calibrate_cnot",
    "gate_fidelity",
    "parabolic_vertex",
    "CNOT",
]

TWO_PI = 2 * math.pi
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
DEFAULT_REPETITIONS = (1, 3, 5, 11)


class CalibrationError(RuntimeError):
    """A stage could not produce a trustworthy value."""


@dataclass(frozen=True)
class CnotPulseParams:
    """Everything that defines one CR-based CNOT; amplitudes in rad/ns, times in ns."""

    cr_amp: float
    cr_phase: float = 0.0
    duration: float = 170.0
    ramp_time: float = 40.0
    drag: float = 0.0
    cancel_amp: float = 0.0
    cancel_phase: float = 0.0
    frame_change: float = 0.0

    def __post_init__(self):
        vals = asdict(self).values()
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("pulse parameters must be finite")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.cr_amp < 0 or self.cancel_amp < 0:
            raise ValueError("amplitudes must be non-negative")
        for name in ("cr_phase", "cancel_phase", "frame_change"):
            object.__setattr__(self, name, getattr(self, name) % TWO_PI)

    def with_(self, **kw) -> "CnotPulseParams":
        return replace(self, **kw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CnotPulseParams":
        return cls(**json.loads(text))


@dataclass
class CalibrationReport:
    stage: str
    grid: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    chosen: object = None
    history: list = field(default_factory=list)
    converged: bool = True
    notes: str = ""

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def cnot_schedule(params: CnotPulseParams, dt: float = 0.5) -> PulseSchedule:
    """CR tone with DRAG on the control line, cancellation tone on the target, then the frame change."""
    entries = [Play("control", make_cr_envelope(params.cr_amp, params.cr_phase, params.duration,
                                                params.ramp_time, params.drag, dt))]
    if params.cancel_amp > 0:
        entries.append(Play("target", make_cr_envelope(params.cancel_amp, params.cancel_phase,
                                                       params.duration, params.ramp_time, 0.0, dt)))
    if params.frame_change:
        entries.append(FrameChange("control", params.frame_change, params.duration))
    return PulseSchedule(entries)


class PulseBackend:
    """Pulse-level backend around :class:`PulseSimulator`; channels are memoised per parameter set."""

    def __init__(self, model: DeviceModel, dt: float = 0.5, noise_on: bool = True):
        self.model = model
        self.simulator = PulseSimulator(model, dt)
        self.noise_on = noise_on and model.noisy
        self._channels: dict = {}

    def cnot_channel(self, params: CnotPulseParams) -> np.ndarray:
        key = tuple(asdict(params).values())
        s = self._channels.get(key)
        if s is None:
            if len(self._channels) > 256:
                self._channels.clear()
            s = self.simulator.channel(cnot_schedule(params, self.simulator.dt), self.noise_on)
            self._channels[key] = s
        return s

    def cr_trajectories(self, params: CnotPulseParams, flats):
        exp = CRRabiExperiment(self.simulator, params.cr_amp, params.cr_phase, params.cancel_amp,
                               params.cancel_phase, params.ramp_time, params.drag)
        return exp.run(flats, noise_on=self.noise_on)


class ModelBackend:
    """Backend defined by callables, for planted devices.

    ``unitary(params)`` returns the 4x4 gate *before* the control frame
    change; ``coefficients(params)`` returns :class:`PauliCoefficients`
    used to synthesise tomography trajectories.
    """

    def __init__(self, unitary: Callable | None = None, coefficients: Callable | None = None):
        if unitary is None and coefficients is None:
            raise ValueError("need a unitary or a coefficient model")
        self._unitary = unitary
        self._coefficients = coefficients

    def gate_unitary(self, params: CnotPulseParams) -> np.ndarray:
        if self._unitary is not None:
            u = np.asarray(self._unitary(params), dtype=complex)
        else:
            c = self._coefficients(params)
            u = expm(-1j * c.hamiltonian() * (params.duration - params.ramp_time))
        fc = np.diag(np.exp(1j * params.frame_change * np.array([0, 0, 1, 1])))
        return fc @ u

    def cnot_channel(self, params: CnotPulseParams) -> np.ndarray:
        return superop_from_unitary(self.gate_unitary(params))

    def cr_trajectories(self, params: CnotPulseParams, flats):
        if self._coefficients is None:
            raise CalibrationError("backend has no coefficient model for tomography")
        c = self._coefficients(params)
        times = np.asarray(flats, dtype=float) + params.ramp_time
        return times, np.stack([bloch_trajectory(c, times, 0), bloch_trajectory(c, times, 1)], axis=1)


# helpers ---------------------------------------------------------------------

def parabolic_vertex(xs, ys) -> float:
    """Vertex of the parabola through three points; falls back to the best point."""
    x0, x1, x2 = xs
    y0, y1, y2 = ys
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a <= 0:
        return xs[int(np.argmin(ys))]
    v = -b / (2 * a)
    return float(np.clip(v, min(xs), max(xs)))


def _refine_1d(f, x, step, rounds=2, max_walk=8, history=None, label=""):
    """Bracket the minimum with three points, take the parabola vertex, then shrink and repeat."""
    for _ in range(rounds):
        xs = [x - step, x, x + step]
        ys = [f(v) for v in xs]
        walks = 0
        while np.argmin(ys) != 1 and walks < max_walk:
            if np.argmin(ys) == 0:
                xs = [xs[0] - step] + xs[:2]
                ys = [f(xs[0])] + ys[:2]
            else:
                xs = xs[1:] + [xs[2] + step]
                ys = ys[1:] + [f(xs[2])]
            walks += 1
        new = parabolic_vertex(xs, ys)
        fy = f(new)
        if fy > min(ys):
            new = xs[int(np.argmin(ys))]
            fy = min(ys)
        if history is not None:
            history.append({"parameter": label, "value": float(new), "objective": float(fy), "step": float(step)})
        x = new
        step /= 4
    return x


def _state(control: str, target: str) -> np.ndarray:
    single = {"0": np.array([1, 0]), "1": np.array([0, 1]),
              "+": np.array([1, 1]) / math.sqrt(2)}
    psi = np.kron(single[control], single[target]).astype(complex)
    return np.outer(psi, psi.conj())


def _repeat(superop, rho, n):
    for _ in range(n):
        rho = apply_superop(superop, rho)
    return rho


def _prob(rho, axes, outcome_fn, shots, seed):
    if shots is None:
        p = measurement_probabilities(rho, axes)
    else:
        p = sample_measurement(rho, axes, shots, seed=seed).frequencies
    return outcome_fn(p)


# stages ------------------------------------------------------------------------

def calibrate_cr_phase(backend, params: CnotPulseParams, n_phases: int = 24, flats=None,
                       min_rate: float = 1e-5):
    """Scan the CR phase, fit the ZX/ZY sinusoids jointly and return the phase with ZY = 0 and ZX > 0.

    With the drive term ``exp(i phi) b``, the conditional rates rotate as
    ``ZX = c cos(phi) + s sin(phi)`` and ``ZY = s cos(phi) - c sin(phi)``,
    so the chosen phase is ``atan2(s, c)``.
    """
    if flats is None:
        flats = np.linspace(0, 400, 41)
    phases = np.linspace(0, TWO_PI, n_phases, endpoint=False)
    zx, zy, err = [], [], []
    base = params.with_(cancel_amp=0.0)
    for ph in phases:
        times, traj = backend.cr_trajectories(base.with_(cr_phase=ph), flats)
        coef, se = fit_cr_hamiltonian(times, traj[:, 0], traj[:, 1])
        zx.append(coef.ZX)
        zy.append(coef.ZY)
        err.append(max(np.nan_to_num(se.ZX), np.nan_to_num(se.ZY)))
    zx, zy = np.array(zx), np.array(zy)
    cos, sin = np.cos(phases), np.sin(phases)
    design = np.block([[cos[:, None], sin[:, None]], [-sin[:, None], cos[:, None]]])
    (c, s), *_ = np.linalg.lstsq(design, np.concatenate([zx, zy]), rcond=None)
    amp = math.hypot(c, s)
    if amp < min_rate:
        raise CalibrationError(f"ZX amplitude {amp:.3g} rad/ns is below threshold; no CR effect")
    phi0 = math.atan2(s, c) % TWO_PI
    resid = np.concatenate([zx, zy]) - design @ np.array([c, s])
    report = CalibrationReport(
        "cr_phase", grid=phases, objective=np.stack([zx, zy], 1), chosen=phi0,
        history=[{"amplitude": amp, "fit_rms": float(np.sqrt(np.mean(resid**2))),
                  "max_stderr": float(max(err))}],
    )
    return phi0, report


def _target_excitation(backend, params, n=1, shots=None, seed=0):
    s = backend.cnot_channel(params.with_(frame_change=0.0))
    rho = _repeat(s, _state("0", "0"), n)
    return _prob(rho, ("Z", "Z"), lambda p: p[1] + p[3], shots, seed)


def calibrate_cancellation_rough(backend, params: CnotPulseParams, amp_max: float | None = None,
                                 n_amp: int = 9, n_phase: int = 16, zoom: int = 2, shots=None, seed=0):
    """Grid scan of (amplitude, phase) of the cancellation tone, then local quadratic refinement.

    The objective is the target ``|1>`` population after one CR pulse with the
    control in ``|0>``. Each zoom pass re-centres a finer grid on the refined point.
    """
    if amp_max is None:
        amp_max = 4 * max(params.cancel_amp, 1e-3) if params.cancel_amp else 0.02
    report = CalibrationReport("cancellation_rough")
    a_lo, a_hi = 0.0, amp_max
    ph_lo, ph_hi = 0.0, TWO_PI
    wrap = True
    best = None
    for level in range(zoom + 1):
        amps = np.linspace(a_lo, a_hi, n_amp)
        phs = np.linspace(ph_lo, ph_hi, n_phase, endpoint=not wrap)
        obj = np.array([[_target_excitation(backend, params.with_(cancel_amp=a, cancel_phase=p), 1, shots,
                                            child_seed(seed, level, i, j))
                         for j, p in enumerate(phs)] for i, a in enumerate(amps)])
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        if (i == n_amp - 1 and a_hi >= amp_max) or (level > 0 and (i in (0, n_amp - 1) and amps[i] > 0)):
            if level == 0:
                raise CalibrationError("cancellation minimum on the amplitude grid boundary; widen the grid")
        a_best, p_best = _quadratic_2d(amps, phs, obj, i, j, wrap)
        cand = params.with_(cancel_amp=max(a_best, 0.0), cancel_phase=p_best)
        val = _target_excitation(backend, cand, 1, shots, child_seed(seed, level, 99))
        if val > obj[i, j]:
            cand, val = params.with_(cancel_amp=amps[i], cancel_phase=phs[j]), obj[i, j]
        report.grid.append({"amplitudes": amps, "phases": phs})
        report.objective.append(obj)
        report.history.append({"level": level, "amp": cand.cancel_amp, "phase": cand.cancel_phase,
                               "objective": float(val)})
        best = (cand, val) if best is None or val <= best[1] else best
        da = amps[1] - amps[0]
        dp = phs[1] - phs[0]
        a_lo, a_hi = max(best[0].cancel_amp - 2 * da, 0.0), best[0].cancel_amp + 2 * da
        ph_lo, ph_hi = best[0].cancel_phase - 2 * dp, best[0].cancel_phase + 2 * dp
        wrap = False
    report.chosen = {"cancel_amp": best[0].cancel_amp, "cancel_phase": best[0].cancel_phase}
    return best[0], report


def _quadratic_2d(xs, ys, z, i, j, wrap):
    """Refine a grid minimum with a 2-D quadratic through its 3x3 neighbourhood."""
    nx, ny = z.shape
    ii = [min(max(i + d, 0), nx - 1) for d in (-1, 0, 1)]
    ii = sorted(set(ii))
    if wrap:
        jj = [(j + d) % ny for d in (-1, 0, 1)]
    else:
        jj = sorted({min(max(j + d, 0), ny - 1) for d in (-1, 0, 1)})
    if len(ii) < 3 or len(jj) < 3:
        return xs[i], ys[j]
    dy = ys[1] - ys[0]
    pts, vals = [], []
    for a in ii:
        for k, b in enumerate(jj):
            yoff = (k - 1) * dy if wrap else ys[b] - ys[j]
            pts.append((xs[a] - xs[i], yoff))
            vals.append(z[a, b])
    pts = np.array(pts)
    design = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1], pts[:, 0] ** 2, pts[:, 1] ** 2,
                              pts[:, 0] * pts[:, 1]])
    coef, *_ = np.linalg.lstsq(design, np.array(vals), rcond=None)
    hess = np.array([[2 * coef[3], coef[5]], [coef[5], 2 * coef[4]]])
    if np.any(np.linalg.eigvalsh(hess) <= 0):
        return xs[i], ys[j]
    off = -np.linalg.solve(hess, coef[1:3])
    dx = xs[1] - xs[0]
    off = np.clip(off, [-dx, -dy], [dx, dy])
    return xs[i] + off[0], (ys[j] + off[1]) % TWO_PI


def _objective_a(backend, p, n, shots, seed):
    return _target_excitation(backend, p, n, shots, seed)


def _objective_b(backend, p, n, shots, seed):
    s = backend.cnot_channel(p.with_(frame_change=0.0))
    rho = _repeat(s, _state("1", "0"), n)
    return _prob(rho, ("Z", "Z"), lambda q: q[0] + q[2], shots, seed)


def _objective_c(backend, p, n, shots, seed):
    """Loss of control coherence after N gates with control and target in ``|+>``."""
    s = backend.cnot_channel(p.with_(frame_change=0.0))
    rho = _repeat(s, _state("+", "+"), n)
    ex = _prob(rho, ("X", "Z"), lambda q: q[0] + q[1] - q[2] - q[3], shots, seed)
    ey = _prob(rho, ("Y", "Z"), lambda q: q[0] + q[1] - q[2] - q[3], shots, child_seed(seed, 1))
    return 1 - math.hypot(ex, ey)


def fine_calibrate(backend, params: CnotPulseParams, repetitions: Sequence[int] = DEFAULT_REPETITIONS,
                   shots=None, seed=0, threshold: float | None = None, drag_step: float = 0.5,
                   loops: str = "abc"):
    """Error-amplified refinement of the cancellation tone, CR amplitude and DRAG.

    (a) control ``|0>``: minimise target excitation over cancellation amplitude then phase;
    (b) control ``|1>``: minimise the target's ``|0>`` population over the CR amplitude;
    (c) control and target ``|+>``: minimise lost control coherence over DRAG.
    Steps shrink as ``1/N``. A loop is skipped once its objective is below
    ``threshold`` (default ``4/sqrt(shots)``, or 1e-10 without shot noise).
    """
    if any(n < 1 or n % 2 == 0 for n in repetitions):
        raise ValueError("repetitions must be odd positive integers")
    if threshold is None:
        threshold = 4 / math.sqrt(shots) if shots else 1e-10
    report = CalibrationReport("fine", grid=list(repetitions))
    p = params
    ref_n = max(repetitions)
    counter = iter(range(10**9))

    def seeded(fn):
        return lambda q, n: fn(backend, q, n, shots, child_seed(seed, next(counter)))

    obj_a, obj_b, obj_c = seeded(_objective_a), seeded(_objective_b), seeded(_objective_c)
    start = {"N": 0, "a": obj_a(p, ref_n), "b": obj_b(p, ref_n), "c": obj_c(p, ref_n)}
    report.objective.append(start)
    best_p, best_total = p, start["a"] + start["b"] + start["c"]
    for n in repetitions:
        if "a" in loops and obj_a(p, n) > threshold:
            step = max(0.1 * p.cancel_amp, 1e-4) / n
            amp = _refine_1d(lambda v: obj_a(p.with_(cancel_amp=abs(v)), n), p.cancel_amp, step,
                             history=report.history, label=f"cancel_amp@N={n}")
            p = p.with_(cancel_amp=abs(amp))
            ph = _refine_1d(lambda v: obj_a(p.with_(cancel_phase=v), n), p.cancel_phase, 0.1 / n,
                            history=report.history, label=f"cancel_phase@N={n}")
            p = p.with_(cancel_phase=ph)
        if "b" in loops and obj_b(p, n) > threshold:
            amp = _refine_1d(lambda v: obj_b(p.with_(cr_amp=abs(v)), n), p.cr_amp, 0.03 * p.cr_amp / n,
                             history=report.history, label=f"cr_amp@N={n}")
            p = p.with_(cr_amp=abs(amp))
        if "c" in loops and obj_c(p, n) > threshold:
            drag = _refine_1d(lambda v: obj_c(p.with_(drag=v), n), p.drag, drag_step / n,
                              history=report.history, label=f"drag@N={n}")
            p = p.with_(drag=drag)
        vals = {"N": n, "a": obj_a(p, ref_n), "b": obj_b(p, ref_n), "c": obj_c(p, ref_n)}
        total = vals["a"] + vals["b"] + vals["c"]
        # keep the reference objective non-increasing: undo a round that made it worse
        if total > best_total:
            p = best_p
            vals = dict(report.objective[-1], N=n, reverted=True)
        else:
            best_p, best_total = p, total
        report.objective.append(vals)
    report.chosen = asdict(p)
    return p, report


def calibrate_frame_change(backend, params: CnotPulseParams, shots=None, seed=0, max_z: float = 0.1):
    """Measure the conditional phase with control and target in ``|+>`` and undo it on the control.

    Returns the measured phase; the stored frame change is its negative.
    """
    s = backend.cnot_channel(params.with_(frame_change=0.0))
    rho = apply_superop(s, _state("+", "+"))
    vals = []
    for k, axis in enumerate("XYZ"):
        vals.append(_prob(rho, (axis, "Z"), lambda q: q[0] + q[1] - q[2] - q[3], shots, child_seed(seed, k)))
    ex, ey, ez = vals
    if abs(ez) > max_z:
        raise CalibrationError(f"control left the equator (<Z> = {ez:.3f}); earlier stages failed")
    phi = math.atan2(ey, ex) % TWO_PI
    report = CalibrationReport("frame_change", grid=["X", "Y", "Z"], objective=vals, chosen=phi)
    return phi, params.with_(frame_change=-phi), report


def gate_fidelity(backend, params: CnotPulseParams, shots=None, seed=0) -> float:
    """Process fidelity of the finished gate against the ideal CNOT via tomography."""
    s = backend.cnot_channel(params)
    chi = process_tomography(lambda rho: apply_superop(s, rho), shots=shots, seed=seed)
    return process_fidelity(chi, chi_from_unitary(CNOT))


def calibrate_cnot(backend, params: CnotPulseParams, repetitions=DEFAULT_REPETITIONS, shots=None, seed=0,
                   n_phases: int = 24, flats=None, cancel_amp_max=None):
    """Run every stage in order; returns the final parameters and the stage reports."""
    reports = []
    phi, rep = calibrate_cr_phase(backend, params, n_phases, flats)
    reports.append(rep)
    p = params.with_(cr_phase=phi, frame_change=0.0, cancel_amp=0.0)
    if cancel_amp_max is None:
        times, traj = backend.cr_trajectories(p, flats if flats is not None else np.linspace(0, 400, 41))
        coef, _ = fit_cr_hamiltonian(times, traj[:, 0], traj[:, 1])
        # a resonant tone of amplitude e adds about e/2 to the unconditional rate
        cancel_amp_max = 4 * math.hypot(coef.IX + coef.ZX, coef.IY + coef.ZY)
    p, rep = calibrate_cancellation_rough(backend, p, cancel_amp_max, shots=shots, seed=child_seed(seed, 1))
    reports.append(rep)
    p, rep = fine_calibrate(backend, p, repetitions, shots=shots, seed=child_seed(seed, 2))
    reports.append(rep)
    _, p, rep = calibrate_frame_change(backend, p, shots=shots, seed=child_seed(seed, 3))
    reports.append(rep)
    return p, reports
