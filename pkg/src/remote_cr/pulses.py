"""Drive envelopes, pulse schedules, schedule simulation and measurement sampling.

Simulation runs in a frame rotating at the dressed target frequency, where
the rotating-wave Hamiltonian of a constant tone is time independent, and
envelopes are piecewise constant over their sample period. Results are
reported in each qubit's own dressed frame: with no drive every
computational state except ``|11>`` (which keeps the static ZZ phase) is
stationary.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.linalg import expm

from .device import TWO_PI, DeviceModel, dressed_frequencies, rwa_parts, system_operators, _assign
from .quantum import PAULIS

__all__ = [
    "Envelope",
    "make_cr_envelope",
    "Play",
    "FrameChange",
    "Gate",
    "PulseSchedule",
    "PulseSimulator",
    "simulate_schedule",
    "ReadoutModel",
    "ShotRecord",
    "measurement_probabilities",
    "sample_measurement",
    "apply_readout_correction",
    "make_rng",
    "child_seed",
    "thermal_state",
    "rotation",
    "write_records",
    "read_records",
]

DEFAULT_MAX_AMP = TWO_PI * 0.25
CHANNELS = ("control", "target")


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for ``seed``; ``key`` selects an independent stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def child_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0] >> 1)


@dataclass(frozen=True, eq=False)
class Envelope:
    """Complex baseband samples ``i + 1j q`` held for ``dt`` each.

    ``carrier`` is the tone frequency in rad/ns; ``None`` means the CR drive
    frequency (dressed target frequency).
    """

    dt: float
    i: np.ndarray
    q: np.ndarray
    phase: float = 0.0
    carrier: float | None = None
    shape: dict | None = None
    max_amp: float = DEFAULT_MAX_AMP

    def __post_init__(self):
        i = np.asarray(self.i, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if i.shape != q.shape or i.ndim != 1:
            raise ValueError("I and Q sample arrays must be 1-D and of equal length")
        if np.any(np.abs(i) > self.max_amp + 1e-12) or np.any(np.abs(q) > self.max_amp + 1e-12):
            raise ValueError("envelope exceeds the maximum amplitude")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "q", q)

    @property
    def samples(self) -> np.ndarray:
        return (self.i + 1j * self.q) * np.exp(1j * self.phase)

    @property
    def duration(self) -> float:
        return len(self.i) * self.dt

    def to_dict(self) -> dict:
        if self.shape is not None:
            return dict(self.shape)
        return {"name": "samples", "dt": self.dt, "i": self.i.tolist(), "q": self.q.tolist(),
                "phase": self.phase, "carrier": self.carrier}

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        d = dict(d)
        name = d.pop("name")
        if name == "cr":
            return make_cr_envelope(**d)
        if name == "samples":
            return cls(d["dt"], d["i"], d["q"], d.get("phase", 0.0), d.get("carrier"))
        raise ValueError(f"unknown envelope shape {name!r}")


def make_cr_envelope(
    amplitude: float,
    phase: float,
    duration: float,
    ramp_time: float,
    drag_coeff: float = 0.0,
    dt: float = 0.5,
    carrier: float | None = None,
    max_amp: float = DEFAULT_MAX_AMP,
) -> Envelope:
    """Flat-top pulse with raised-cosine edges and a DRAG quadrature ``Q = drag * dI/dt``.

    Samples sit at interval midpoints, so the integral of ``I`` is exactly
    ``amplitude * (duration - ramp_time)`` when ``ramp_time / dt`` is an integer.
    ``duration == 2 * ramp_time`` gives a pure raised-cosine pulse.
    """
    if ramp_time <= 0 or duration < 2 * ramp_time - 1e-9:
        raise ValueError("need duration >= 2 * ramp_time > 0")
    if abs(amplitude) > max_amp:
        raise ValueError(f"amplitude {amplitude} exceeds maximum {max_amp}")
    n = int(round(duration / dt))
    t = (np.arange(n) + 0.5) * dt
    rise = np.clip(t / ramp_time, 0, 1)
    fall = np.clip((duration - t) / ramp_time, 0, 1)
    i = amplitude * 0.5 * (1 - np.cos(np.pi * np.minimum(rise, fall)))
    q = drag_coeff * np.gradient(i, dt) if drag_coeff else np.zeros(n)
    shape = {"name": "cr", "amplitude": amplitude, "phase": phase, "duration": duration,
             "ramp_time": ramp_time, "drag_coeff": drag_coeff, "dt": dt, "carrier": carrier,
             "max_amp": max_amp}
    return Envelope(dt, i, q, phase, carrier, shape, max_amp)


@dataclass(frozen=True, eq=False)
class Play:
    channel: str
    envelope: Envelope
    start: float = 0.0

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}")

    @property
    def end(self) -> float:
        return self.start + self.envelope.duration


@dataclass(frozen=True)
class FrameChange:
    """Virtual Z: multiplies ``|1>`` of ``qubit`` by ``exp(i phase)``."""

    qubit: str
    phase: float
    time: float = 0.0


@dataclass(frozen=True, eq=False)
class Gate:
    """Instantaneous ideal single-qubit unitary on the qubit's 0-1 levels."""

    qubit: str
    matrix: np.ndarray
    time: float = 0.0


Entry = Union[Play, FrameChange, Gate]


@dataclass
class PulseSchedule:
    entries: list = field(default_factory=list)

    def __post_init__(self):
        plays = [e for e in self.entries if isinstance(e, Play)]
        for ch in CHANNELS:
            spans = sorted((p.start, p.end) for p in plays if p.channel == ch)
            for (s0, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 < e0 - 1e-9:
                    raise ValueError(f"overlapping segments on channel {ch!r}")

    @property
    def duration(self) -> float:
        ends = [e.end if isinstance(e, Play) else e.time for e in self.entries]
        return max(ends, default=0.0)

    def then(self, other: "PulseSchedule") -> "PulseSchedule":
        """Concatenate ``other`` after this schedule."""
        t0 = self.duration
        shifted = []
        for e in other.entries:
            if isinstance(e, Play):
                shifted.append(Play(e.channel, e.envelope, e.start + t0))
            elif isinstance(e, FrameChange):
                shifted.append(FrameChange(e.qubit, e.phase, e.time + t0))
            else:
                shifted.append(Gate(e.qubit, e.matrix, e.time + t0))
        return PulseSchedule(self.entries + shifted)

    def repeat(self, n: int) -> "PulseSchedule":
        out = PulseSchedule([])
        for _ in range(n):
            out = out.then(self)
        return out

    def to_dict(self) -> dict:
        segs = []
        for e in self.entries:
            if isinstance(e, Play):
                segs.append({"type": "play", "channel": e.channel, "start": e.start,
                             "shape": e.envelope.to_dict()})
            elif isinstance(e, FrameChange):
                segs.append({"type": "frame_change", "qubit": e.qubit, "phase": e.phase, "time": e.time})
            else:
                m = np.asarray(e.matrix)
                segs.append({"type": "gate", "qubit": e.qubit, "time": e.time,
                             "real": m.real.tolist(), "imag": m.imag.tolist()})
        return {"segments": segs}

    @classmethod
    def from_dict(cls, d: dict) -> "PulseSchedule":
        entries = []
        for s in d["segments"]:
            kind = s["type"]
            if kind == "play":
                entries.append(Play(s["channel"], Envelope.from_dict(s["shape"]), s["start"]))
            elif kind == "frame_change":
                entries.append(FrameChange(s["qubit"], s["phase"], s["time"]))
            elif kind == "gate":
                entries.append(Gate(s["qubit"], np.array(s["real"]) + 1j * np.array(s["imag"]), s["time"]))
            else:
                raise ValueError(f"unknown segment type {kind!r}")
        return cls(entries)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text: str) -> "PulseSchedule":
        return cls.from_dict(json.loads(text))


def rotation(theta: float, angle: float = np.pi / 2) -> np.ndarray:
    """``exp(-i angle/2 (cos(theta) X + sin(theta) Y))``."""
    axis = math.cos(theta) * PAULIS["X"] + math.sin(theta) * PAULIS["Y"]
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * axis


def _local_dissipator(levels, t1, t2, dt):
    low = np.diag(np.sqrt(np.arange(1, levels)), 1).astype(complex)
    num = low.conj().T @ low
    gamma_phi = max(1.0 / t2 - 0.5 / t1, 0.0)
    ops = [low / math.sqrt(t1)]
    if gamma_phi > 0:
        ops.append(num * math.sqrt(2 * gamma_phi))
    eye = np.eye(levels)
    gen = np.zeros((levels**2,) * 2, dtype=complex)
    for op in ops:
        sq = op.conj().T @ op
        gen += np.kron(op, op.conj()) - 0.5 * np.kron(sq, eye) - 0.5 * np.kron(eye, sq.T)
    return expm(gen * dt)


def _apply_local(rho, sup, axis, dims):
    """Apply a single-subsystem superoperator to a stack of density matrices."""
    batch = rho.shape[0]
    n = len(dims)
    d = dims[axis]
    t = rho.reshape((batch,) + tuple(dims) * 2)
    s = sup.reshape(d, d, d, d)
    t = np.tensordot(s, t, axes=([2, 3], [1 + axis, 1 + n + axis]))
    # result axes: (a', b', batch, remaining...) -> move back
    t = np.moveaxis(t, [0, 1], [1 + axis, 1 + n + axis])
    return t.reshape(rho.shape)


class PulseSimulator:
    """Executes pulse schedules on a :class:`DeviceModel`.

    Expensive per-model data (dressed basis, frame energies, propagator cache)
    is built once, so reuse one simulator for many schedules.
    """

    def __init__(self, model: DeviceModel, dt: float = 0.5):
        self.model = model
        self.dt = dt
        self.ops = system_operators(model)
        self.dims = self.ops.hilbert.dims
        self.frequency = dressed_frequencies(model)[1]
        self.h0, low_c, low_t = rwa_parts(model, self.frequency)
        self.lowering = {"control": low_c, "target": low_t}
        energies, vecs = np.linalg.eigh(self.h0)
        order = _assign(vecs, [np.array([i]) for i in range(len(energies))])
        vecs = vecs[:, order]
        diag = np.diag(vecs)
        self.dressing = vecs * (np.abs(diag) / diag)
        energies = energies[order]
        self.comp = self.ops.comp_indices()
        e00 = energies[self.comp[0]]
        labels = np.array(np.unravel_index(np.arange(len(energies)), self.dims)).T
        single = []
        for k in range(len(self.dims)):
            idx = np.zeros(len(self.dims), dtype=int)
            idx[k] = 1
            single.append(energies[np.ravel_multi_index(idx, self.dims)] - e00)
        self.frame_energies = e00 + labels @ np.array(single)
        self.levels = labels
        self._cache: dict = {}
        self._dissipators = None
        if model.noisy:
            self._dissipators = [
                _local_dissipator(self.dims[q], model.t1[q], model.t2[q], dt) for q in (0, 1)
            ]

    # frames -----------------------------------------------------------------
    def _frame_phase(self, t):
        return np.exp(1j * self.frame_energies * t)

    def _number_phase(self, qubit, angle):
        q = CHANNELS.index(qubit)
        return np.exp(1j * angle * self.levels[:, q])

    def _gate_sim(self, gate: Gate, t):
        q = CHANNELS.index(gate.qubit)
        local = np.eye(self.dims[q], dtype=complex)
        local[:2, :2] = gate.matrix
        g_bare = self.ops.hilbert.embed(local, q)
        d = self._frame_phase(t)
        v = self.dressing
        return v @ ((d.conj()[:, None] * g_bare) * d[None, :]) @ v.conj().T

    def _frame_sim(self, fc: FrameChange):
        v = self.dressing
        return (v * self._number_phase(fc.qubit, fc.phase)) @ v.conj().T

    # propagation ------------------------------------------------------------
    def _hamiltonian(self, drives, t):
        h = self.h0.copy()
        for ch, value, delta in drives:
            term = 0.5 * value * np.exp(1j * (delta * t + self.model.line_phase[CHANNELS.index(ch)])) * self.lowering[ch]
            h += term + term.conj().T
        return h

    def _step(self, drives, t0):
        dt = self.dt
        static = all(delta == 0 for _, _, delta in drives)
        if static:
            key = tuple((ch, complex(np.round(v, 14))) for ch, v, _ in drives)
            u = self._cache.get(key)
            if u is None:
                w, vec = np.linalg.eigh(self._hamiltonian(drives, 0.0))
                u = (vec * np.exp(-1j * w * dt)) @ vec.conj().T
                if len(self._cache) >= 4096:
                    self._cache.clear()
                self._cache[key] = u
            return u
        fastest = max(abs(delta) for _, _, delta in drives)
        n_sub = max(1, int(math.ceil(fastest * dt / 0.05)))
        h_sub = dt / n_sub
        u = np.eye(self.h0.shape[0], dtype=complex)
        for k in range(n_sub):
            w, vec = np.linalg.eigh(self._hamiltonian(drives, t0 + (k + 0.5) * h_sub))
            u = (vec * np.exp(-1j * w * h_sub)) @ vec.conj().T @ u
        return u

    def _timeline(self, schedule: PulseSchedule):
        dt = self.dt
        plays, events = [], []
        for e in schedule.entries:
            if isinstance(e, Play):
                if not math.isclose(e.envelope.dt, dt):
                    raise ValueError("envelope sample period differs from simulator dt")
                plays.append((int(round(e.start / dt)), e))
            else:
                events.append((int(round(e.time / dt)), e))
        n_steps = int(round(schedule.duration / dt))
        starts = {}
        for k, e in events:
            starts.setdefault(k, []).append(e)
        for k in range(n_steps + 1):
            for e in starts.get(k, []):
                yield "event", k * dt, e
            if k == n_steps:
                break
            drives = []
            for k0, p in plays:
                j = k - k0
                if 0 <= j < len(p.envelope.i):
                    value = p.envelope.samples[j]
                    carrier = p.envelope.carrier
                    delta = 0.0 if carrier is None else carrier - self.frequency
                    drives.append((p.channel, value, delta))
            yield "step", k * dt, drives

    def schedule_unitary(self, schedule: PulseSchedule) -> np.ndarray:
        """Full-space propagator in the simulation frame (noise ignored)."""
        u = np.eye(self.h0.shape[0], dtype=complex)
        for kind, t, item in self._timeline(schedule):
            if kind == "event":
                u = (self._gate_sim(item, t) if isinstance(item, Gate) else self._frame_sim(item)) @ u
            elif item:
                u = self._step(item, t) @ u
            else:
                u = self._step([], t) @ u
        return u

    def _evolve_stack(self, schedule, stack, noise_on):
        if not (noise_on and self._dissipators is not None):
            u = self.schedule_unitary(schedule)
            return u @ stack @ u.conj().T
        for kind, t, item in self._timeline(schedule):
            if kind == "event":
                g = self._gate_sim(item, t) if isinstance(item, Gate) else self._frame_sim(item)
                stack = g @ stack @ g.conj().T
                continue
            u = self._step(item, t)
            stack = u @ stack @ u.conj().T
            for q, sup in enumerate(self._dissipators):
                stack = _apply_local(stack, sup, q, self.dims)
        return stack

    # embedding / reduction --------------------------------------------------
    def embed(self, rho2: np.ndarray) -> np.ndarray:
        """Two-qubit operator -> full space, modes empty, dressed basis, simulation frame."""
        n = self.h0.shape[0]
        full = np.zeros((n, n), dtype=complex)
        full[np.ix_(self.comp, self.comp)] = rho2
        v = self.dressing
        return v @ full @ v.conj().T

    def to_labels(self, rho_sim: np.ndarray, t: float) -> np.ndarray:
        """Simulation-frame state -> bare-label basis in the reported qubit frames."""
        v = self.dressing
        d = self._frame_phase(t)
        out = v.conj().T @ rho_sim @ v
        return d[..., :, None] * out * d.conj()[..., None, :]

    def reduce(self, rho_labels: np.ndarray) -> np.ndarray:
        """Trace out cable modes and bin the second excited level into ``|1>``."""
        lc, lt = self.dims[:2]
        m = int(np.prod(self.dims[2:]))
        batch = rho_labels.shape[:-2]
        r = rho_labels.reshape(batch + (lc, lt, m, lc, lt, m))
        r = np.trace(r, axis1=-4, axis2=-1)
        out = r[..., :2, :2, :2, :2].copy()
        if lc > 2:
            for k in range(2, lc):
                out[..., 1, :, 1, :] += r[..., k, :2, k, :2]
        if lt > 2:
            r2 = out.copy()
            for k in range(2, lt):
                r2[..., :, 1, :, 1] += r[..., :2, k, :2, k]
                if lc > 2:
                    for j in range(2, lc):
                        r2[..., 1, 1, 1, 1] += r[..., j, k, j, k]
            out = r2
        return out.reshape(batch + (4, 4))

    def diagnostics(self, rho_labels: np.ndarray) -> dict:
        pops = np.real(np.diagonal(rho_labels, axis1=-2, axis2=-1))
        lev = self.levels
        return {
            "leakage": float(pops[..., (lev[:, 0] > 1) | (lev[:, 1] > 1)].sum()),
            "cable_excitation": float(pops[..., lev[:, 2:].sum(axis=1) > 0].sum()) if lev.shape[1] > 2 else 0.0,
        }

    def run(self, schedule: PulseSchedule, initial: np.ndarray, noise_on: bool = True, full: bool = False):
        """Evolve a two-qubit initial state; returns the reduced 4x4 state.

        With ``full=True`` also returns the full bare-label state for diagnostics.
        """
        rho = self.embed(np.asarray(initial, dtype=complex))[None]
        out = self._evolve_stack(schedule, rho, noise_on)[0]
        labels = self.to_labels(out, schedule.duration)
        red = self.reduce(labels)
        red = 0.5 * (red + red.conj().T)
        return (red, labels) if full else red

    def channel(self, schedule: PulseSchedule, noise_on: bool = True) -> np.ndarray:
        """Two-qubit superoperator (row-major vectorisation) of a schedule."""
        basis = np.zeros((16, 4, 4), dtype=complex)
        for k in range(16):
            basis[k].flat[k] = 1.0
        n = self.h0.shape[0]
        stack = np.zeros((16, n, n), dtype=complex)
        stack[:, self.comp[:, None], self.comp[None, :]] = basis
        v = self.dressing
        stack = v @ stack @ v.conj().T
        out = self._evolve_stack(schedule, stack, noise_on)
        red = self.reduce(self.to_labels(out, schedule.duration))
        return red.reshape(16, 16).T


def simulate_schedule(model: DeviceModel, schedule: PulseSchedule, initial: np.ndarray,
                      noise_on: bool = True, dt: float = 0.5) -> np.ndarray:
    return PulseSimulator(model, dt).run(schedule, initial, noise_on)


# measurement ----------------------------------------------------------------

def thermal_state(p_control: float = 0.0, p_target: float = 0.0) -> np.ndarray:
    """``|00>`` prepared with independent thermal flips to ``|1>``."""
    pc = np.diag([1 - p_control, p_control])
    pt = np.diag([1 - p_target, p_target])
    return np.kron(pc, pt).astype(complex)


@dataclass(frozen=True)
class ReadoutModel:
    """``confusion[q][i][j] = P(report j | true i)``; ``thermal`` applies at preparation."""

    confusion: tuple = (((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.0, 1.0)))
    thermal: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        mats = tuple(tuple(map(tuple, np.asarray(c, dtype=float))) for c in self.confusion)
        for c in mats:
            arr = np.array(c)
            if arr.shape != (2, 2) or np.any(arr < 0) or not np.allclose(arr.sum(axis=1), 1):
                raise ValueError("confusion matrices must be 2x2 row-stochastic")
        if any(not 0 <= p <= 0.1 for p in self.thermal):
            raise ValueError("thermal probability must lie in [0, 0.1]")
        object.__setattr__(self, "confusion", mats)

    @classmethod
    def from_device(cls, model: DeviceModel) -> "ReadoutModel":
        return cls(model.confusion, model.thermal)

    @classmethod
    def symmetric(cls, error: float = 0.0, thermal: float = 0.0) -> "ReadoutModel":
        c = ((1 - error, error), (error, 1 - error))
        return cls((c, c), (thermal, thermal))

    @property
    def matrix(self) -> np.ndarray:
        return np.kron(np.array(self.confusion[0]), np.array(self.confusion[1]))

    def initial_state(self) -> np.ndarray:
        return thermal_state(*self.thermal)


@dataclass(frozen=True, eq=False)
class ShotRecord:
    basis: tuple
    counts: np.ndarray
    shots: int
    seed: int | None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (4,) or counts.sum() != self.shots:
            raise ValueError("counts must cover the 4 outcomes and sum to the shot total")
        object.__setattr__(self, "counts", counts)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.shots

    def to_json(self) -> str:
        return json.dumps({
            "basis": [b if isinstance(b, str) else float(b) for b in self.basis],
            "counts": dict(zip(("00", "01", "10", "11"), map(int, self.counts))),
            "shots": int(self.shots),
            "seed": self.seed,
        })

    @classmethod
    def from_json(cls, line: str) -> "ShotRecord":
        d = json.loads(line)
        counts = [d["counts"][k] for k in ("00", "01", "10", "11")]
        return cls(tuple(d["basis"]), np.array(counts), d["shots"], d["seed"])


def write_records(path, records: Iterable[ShotRecord]):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[ShotRecord]:
    with open(path, encoding="utf-8") as fh:
        return [ShotRecord.from_json(line) for line in fh if line.strip()]


def _axis_basis(axis) -> np.ndarray:
    """Rows are the +1 and -1 eigenvectors of the measured axis."""
    if isinstance(axis, str):
        if axis not in ("X", "Y", "Z"):
            raise ValueError(f"invalid measurement axis {axis!r}")
        op = PAULIS[axis]
    else:
        beta = float(axis)
        op = math.cos(beta) * PAULIS["X"] + math.sin(beta) * PAULIS["Y"]
    w, v = np.linalg.eigh(op)
    return v[:, ::-1].conj().T


def measurement_probabilities(rho: np.ndarray, axes: Sequence, readout: ReadoutModel | None = None) -> np.ndarray:
    """Outcome distribution over ``00, 01, 10, 11`` (control bit first)."""
    if len(axes) != 2:
        raise ValueError("need one axis per qubit")
    r = np.kron(_axis_basis(axes[0]), _axis_basis(axes[1]))
    p = np.clip(np.real(np.diag(r @ rho @ r.conj().T)), 0, None)
    p = p / p.sum()
    if readout is not None:
        p = p @ readout.matrix
    return p


def sample_measurement(rho, axes, shots: int, readout: ReadoutModel | None = None, seed: int = 0) -> ShotRecord:
    if shots <= 0:
        raise ValueError("shots must be positive")
    p = measurement_probabilities(rho, axes, readout)
    counts = make_rng(seed).multinomial(shots, p)
    return ShotRecord(tuple(axes), counts, shots, seed)


def apply_readout_correction(record, readout: ReadoutModel):
    """Invert the confusion matrices on an outcome distribution.

    ``record`` is a :class:`ShotRecord` or a frequency vector. Returns
    ``(raw, clipped)``: the direct inverse and its projection onto the
    simplex by clipping negatives and renormalising.
    """
    freqs = record.frequencies if isinstance(record, ShotRecord) else np.asarray(record, dtype=float)
    m = readout.matrix
    if abs(np.linalg.det(m)) < 1e-12:
        raise np.linalg.LinAlgError("confusion matrix is singular")
    raw = np.linalg.solve(m.T, freqs)
    clipped = np.clip(raw, 0, None)
    clipped = clipped / clipped.sum()
    return raw, clipped
