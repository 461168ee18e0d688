"""Cable-coupled two-transmon device and its effective cross-resonance Hamiltonian.

Subsystem order is ``[control, target, mode_1, ..., mode_n]``. Transmons are
Duffing oscillators with ``levels`` states; with two levels the number
operator is ``(I - Z) / 2`` so ``omega * n`` is ``-omega Z / 2`` up to an
energy offset. The rotating frame is generated by the total excitation
number, which for the two-qubit block is the ``exp[-i w t (Zc + Zt) / 2]``
transformation up to a global phase.

Effective Pauli rates follow ``H = sum_P w_P P``: a Bloch vector precesses at
angular rate ``2 |w|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .quantum import HilbertSpec, pauli_decompose

__all__ = [
    "TWO_PI",
    "CableMode",
    "DeviceModel",
    "DriveSettings",
    "PauliCoefficients",
    "SystemOperators",
    "system_operators",
    "build_system_hamiltonian",
    "rotating_frame",
    "rwa_hamiltonian",
    "block_diagonalize",
    "dressed_frequencies",
    "effective_hamiltonian",
    "effective_pauli_coefficients",
    "cable_mode_frequencies",
]

TWO_PI = 2 * math.pi
COEFF_LABELS = ("IX", "IY", "IZ", "ZX", "ZY", "ZZ")


def _ghz(f):
    return TWO_PI * f


@dataclass(frozen=True)
class CableMode:
    """One standing-wave mode of the interconnect cable."""

    index: int
    frequency: float
    g_control: float
    g_target: float
    alpha_control: float = 0.0
    alpha_target: float = 0.0
    levels: int = 2

    def __post_init__(self):
        if self.index < 1:
            raise ValueError("mode index must be a positive integer")
        if not self.frequency > 0:
            raise ValueError("mode frequency must be positive")
        if self.levels < 2:
            raise ValueError("mode truncation must keep at least 2 levels")

    @property
    def parity(self) -> int:
        return -1 if self.index % 2 else 1


def _check_confusion(c):
    c = np.asarray(c, dtype=float)
    if c.shape != (2, 2) or np.any(c < 0) or np.any(c > 1) or not np.allclose(c.sum(axis=1), 1):
        raise ValueError(f"confusion matrix must be 2x2 row-stochastic, got {c.tolist()}")
    return tuple(map(tuple, c))


@dataclass(frozen=True)
class DeviceModel:
    """Physical parameters, all in rad/ns and ns.

    ``line_phase`` holds the unknown phase each drive line adds to its tone;
    it is what makes the CR phase scan necessary.
    """

    control_freq: float = _ghz(4.80)
    target_freq: float = _ghz(4.70)
    control_anharm: float = _ghz(-0.25)
    target_anharm: float = _ghz(-0.25)
    modes: tuple[CableMode, ...] = ()
    levels: int = 3
    t1: tuple[float, float] | None = None
    t2: tuple[float, float] | None = None
    confusion: tuple = ((1.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (0.0, 1.0))
    thermal: tuple[float, float] = (0.0, 0.0)
    line_phase: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if math.isclose(self.control_freq, self.target_freq):
            raise ValueError("control and target must be detuned for cross resonance")
        if self.levels not in (2, 3):
            raise ValueError("transmon level count must be 2 or 3")
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "confusion", tuple(_check_confusion(c) for c in self.confusion))
        if len(self.confusion) != 2:
            raise ValueError("need one confusion matrix per qubit")
        if any(not 0 <= p <= 0.1 for p in self.thermal):
            raise ValueError("thermal excitation probability must lie in [0, 0.1]")
        if (self.t1 is None) != (self.t2 is None):
            raise ValueError("T1 and T2 must be given together")
        if self.t1 is not None:
            for t1, t2 in zip(self.t1, self.t2):
                if t1 <= 0 or t2 <= 0 or t2 > 2 * t1 + 1e-9:
                    raise ValueError("need 0 < T2 <= 2 T1")

    @property
    def noisy(self) -> bool:
        return self.t1 is not None

    def noiseless(self) -> "DeviceModel":
        return replace(self, t1=None, t2=None)

    def ideal_readout(self) -> "DeviceModel":
        eye = ((1.0, 0.0), (0.0, 1.0))
        return replace(self, confusion=(eye, eye), thermal=(0.0, 0.0))

    @property
    def hilbert(self) -> HilbertSpec:
        return HilbertSpec((self.levels, self.levels) + tuple(m.levels for m in self.modes))

    @classmethod
    def default(cls, levels: int = 3, **overrides) -> "DeviceModel":
        """Desk-scale defaults; none of these numbers are measured values."""
        freqs = cable_mode_frequencies(0.30, 0.20, 2, first=13)
        modes = tuple(
            CableMode(n, f, _ghz(0.0125), _ghz(0.0125), 0.01, 0.01) for n, f in zip((13, 14), freqs)
        )
        params = dict(modes=modes, levels=levels, line_phase=(0.6, -0.4))
        params.update(overrides)
        return cls(**params)


@dataclass(frozen=True)
class DriveSettings:
    """Constant CR tone on the control line plus cancellation tone on the target line.

    ``frequency`` defaults to the dressed target frequency.
    """

    control_amp: float = 0.0
    control_phase: float = 0.0
    target_amp: float = 0.0
    target_phase: float = 0.0
    drag: float = 0.0
    frequency: float | None = None

    def __post_init__(self):
        if self.control_amp < 0 or self.target_amp < 0:
            raise ValueError("drive amplitudes must be non-negative")
        object.__setattr__(self, "control_phase", self.control_phase % TWO_PI)
        object.__setattr__(self, "target_phase", self.target_phase % TWO_PI)


@dataclass(frozen=True)
class PauliCoefficients:
    IX: float = 0.0
    IY: float = 0.0
    IZ: float = 0.0
    ZX: float = 0.0
    ZY: float = 0.0
    ZZ: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("Pauli coefficients must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in COEFF_LABELS], dtype=float)

    @classmethod
    def from_array(cls, values) -> "PauliCoefficients":
        return cls(*map(float, values))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(COEFF_LABELS, self.as_array()))

    def branch_vectors(self) -> np.ndarray:
        """Precession vectors ``2 (w_I. + z w_Z.)`` for control ``z = +1, -1``."""
        w = self.as_array()
        return np.array([2 * (w[:3] + w[3:]), 2 * (w[:3] - w[3:])])

    def hamiltonian(self) -> np.ndarray:
        from .quantum import pauli_embed

        return sum(getattr(self, k) * pauli_embed(k) for k in COEFF_LABELS)


@dataclass(frozen=True)
class SystemOperators:
    hilbert: HilbertSpec
    b: tuple[np.ndarray, np.ndarray]
    a: tuple[np.ndarray, ...]
    number: np.ndarray = field(repr=False)

    @property
    def n(self):
        return tuple(op.conj().T @ op for op in self.b)

    def comp_indices(self) -> np.ndarray:
        """Full-space indices of ``|00>, |01>, |10>, |11>`` with all modes empty."""
        dims = self.hilbert.dims
        rest = math.prod(dims[2:])
        return np.array([(c * dims[1] + t) * rest for c in (0, 1) for t in (0, 1)])


def _lowering(d):
    return np.diag(np.sqrt(np.arange(1, d)), 1).astype(complex)


@lru_cache(maxsize=32)
def system_operators(model: DeviceModel) -> SystemOperators:
    spec = model.hilbert
    b = tuple(spec.embed(_lowering(spec.dims[i]), i) for i in (0, 1))
    a = tuple(spec.embed(_lowering(spec.dims[i]), i) for i in range(2, len(spec.dims)))
    number = sum(op.conj().T @ op for op in b + a)
    return SystemOperators(spec, b, a, np.real(np.diag(number)))


@lru_cache(maxsize=32)
def _static_parts(model: DeviceModel):
    """Lab-frame static Hamiltonian and the bare drive operators of each line."""
    ops = system_operators(model)
    h = np.zeros((ops.hilbert.total,) * 2, dtype=complex)
    for bq, w, eta in zip(ops.b, (model.control_freq, model.target_freq),
                          (model.control_anharm, model.target_anharm)):
        nq = bq.conj().T @ bq
        h += w * nq + 0.5 * eta * (nq @ nq - nq)
    xc = ops.b[0] + ops.b[0].conj().T
    xt = ops.b[1] + ops.b[1].conj().T
    drive_c, drive_t = xc.copy(), xt.copy()
    for mode, am in zip(model.modes, ops.a):
        xm = am + am.conj().T
        h += mode.frequency * am.conj().T @ am
        h += mode.g_control * xm @ xc + mode.parity * mode.g_target * xm @ xt
        drive_c += mode.alpha_control * xm
        drive_t += mode.alpha_target * xm
    return h, drive_c, drive_t


def _drive_frequency(model, drive):
    return dressed_frequencies(model)[1] if drive.frequency is None else drive.frequency


def build_system_hamiltonian(model: DeviceModel, drive: DriveSettings, t: float) -> np.ndarray:
    """Lab-frame Hamiltonian at time ``t`` with both tones at the drive frequency."""
    if t < 0:
        raise ValueError("time must be non-negative")
    h0, drive_c, drive_t = _static_parts(model)
    w = _drive_frequency(model, drive)
    phc = drive.control_phase + model.line_phase[0]
    pht = drive.target_phase + model.line_phase[1]
    return (h0 + drive.control_amp * math.cos(w * t + phc) * drive_c
            + drive.target_amp * math.cos(w * t + pht) * drive_t)


def rotating_frame(
    hamiltonian: Callable[[float], np.ndarray],
    frequency: float,
    number: np.ndarray,
    rwa: bool = False,
    periods: int = 100,
    samples_per_period: int = 8,
):
    """Move ``hamiltonian`` into the frame ``U = exp(i w t N)``.

    ``number`` is the diagonal of the excitation-number operator ``N``. The
    returned callable is ``U H U^dag + i (dU/dt) U^dag``. With ``rwa`` the
    frame Hamiltonian is averaged over ``periods`` drive periods (trapezoid
    rule), which removes the terms rotating at twice the drive frequency and
    leaves a constant generator.
    """
    number = np.asarray(number, dtype=float)
    diff = number[:, None] - number[None, :]

    def frame(t):
        phase = np.exp(1j * frequency * t * diff)
        return np.asarray(hamiltonian(t)) * phase - frequency * np.diag(number)

    if not rwa:
        return frame
    n = periods * samples_per_period
    times = np.linspace(0.0, periods * TWO_PI / abs(frequency), n + 1)
    weights = np.full(n + 1, 1.0 / n)
    weights[[0, -1]] = 0.5 / n
    avg = sum(wt * frame(t) for wt, t in zip(weights, times))
    avg = 0.5 * (avg + avg.conj().T)
    return lambda t: avg


def _exchange_parts(model: DeviceModel):
    """Rotating-frame pieces without drive detuning: number-conserving couplings."""
    ops = system_operators(model)
    h = np.zeros((ops.hilbert.total,) * 2, dtype=complex)
    for bq, eta in zip(ops.b, (model.control_anharm, model.target_anharm)):
        nq = bq.conj().T @ bq
        h += 0.5 * eta * (nq @ nq - nq)
    for mode, am in zip(model.modes, ops.a):
        h += mode.g_control * (am.conj().T @ ops.b[0] + am @ ops.b[0].conj().T)
        h += mode.parity * mode.g_target * (am.conj().T @ ops.b[1] + am @ ops.b[1].conj().T)
    return h


@lru_cache(maxsize=64)
def rwa_parts(model: DeviceModel, frequency: float):
    """Static RWA Hamiltonian in the frame at ``frequency`` and the lowering parts of each line."""
    ops = system_operators(model)
    h = _exchange_parts(model)
    freqs = (model.control_freq, model.target_freq)
    for bq, w in zip(ops.b, freqs):
        h += (w - frequency) * bq.conj().T @ bq
    low_c, low_t = ops.b[0].copy(), ops.b[1].copy()
    for mode, am in zip(model.modes, ops.a):
        h += (mode.frequency - frequency) * am.conj().T @ am
        low_c += mode.alpha_control * am
        low_t += mode.alpha_target * am
    return h, low_c, low_t


def rwa_hamiltonian(model: DeviceModel, drive: DriveSettings) -> np.ndarray:
    """Closed-form rotating-wave Hamiltonian for constant tones."""
    w = _drive_frequency(model, drive)
    h, low_c, low_t = rwa_parts(model, w)
    out = h.copy()
    for amp, phase, low in ((drive.control_amp, drive.control_phase + model.line_phase[0], low_c),
                            (drive.target_amp, drive.target_phase + model.line_phase[1], low_t)):
        term = 0.5 * amp * np.exp(1j * phase) * low
        out += term + term.conj().T
    return out


def _assign(vecs, groups):
    """Match eigenvectors (columns) to index groups by maximal overlap."""
    weights = np.abs(vecs) ** 2
    slots = [g for g, idx in enumerate(groups) for _ in idx]
    cost = -np.array([weights[groups[g]].sum(axis=0) for g in slots])
    rows, cols = linear_sum_assignment(cost)
    order = np.empty(len(slots), dtype=int)
    order[rows] = cols
    return order


def block_diagonalize(h: np.ndarray, groups: list[np.ndarray]):
    """Least-action block diagonalisation of a Hermitian matrix.

    ``groups`` partitions the basis indices. Returns ``(T, h_bd)`` with
    ``h_bd = T^dag h T`` block diagonal and ``T`` the unitary closest to the
    identity that achieves it.
    """
    dim = h.shape[0]
    energies, vecs = np.linalg.eigh(h)
    perm = np.concatenate(groups)
    order = _assign(vecs, groups)
    # column j of x is the eigenvector assigned to basis slot perm[j]
    x = np.zeros_like(vecs)
    x[:, perm] = vecs[:, order]
    x_bd = np.zeros_like(x)
    for g in groups:
        x_bd[np.ix_(g, g)] = x[np.ix_(g, g)]
    w, v = np.linalg.eigh(x_bd @ x_bd.conj().T)
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    t = x @ x_bd.conj().T @ inv_sqrt
    h_bd = t.conj().T @ h @ t
    mask = np.zeros((dim, dim), dtype=bool)
    for g in groups:
        mask[np.ix_(g, g)] = True
    h_bd = np.where(mask, h_bd, 0)
    return t, 0.5 * (h_bd + h_bd.conj().T)


def _dressed_states(model: DeviceModel, frequency: float = 0.0):
    h, _, _ = rwa_parts(model, frequency)
    energies, vecs = np.linalg.eigh(h)
    order = _assign(vecs, [np.array([i]) for i in range(h.shape[0])])
    vecs = vecs[:, order]
    energies = energies[order]
    # fix phases so each dressed state has positive overlap with its bare state
    diag = np.diag(vecs)
    vecs = vecs * (np.abs(diag) / np.where(diag == 0, 1, diag))
    return energies, vecs


@lru_cache(maxsize=32)
def dressed_frequencies(model: DeviceModel) -> tuple[float, float]:
    """Dressed 0-1 transition frequencies ``(control, target)`` in the lab frame."""
    energies, _ = _dressed_states(model)
    idx = system_operators(model).comp_indices()
    e00, e01, e10 = energies[idx[0]], energies[idx[1]], energies[idx[2]]
    return float(e10 - e00), float(e01 - e00)


def dressing_unitary(model: DeviceModel) -> np.ndarray:
    """Columns are dressed eigenstates labelled by the bare state they continue."""
    return _dressed_states(model)[1]


def effective_hamiltonian(model: DeviceModel, drive: DriveSettings, method: str = "average",
                          frame: str = "adiabatic", steps: int = 16) -> np.ndarray:
    """4x4 effective Hamiltonian on the computational block in the drive frame.

    The rotating-frame Hamiltonian (time-averaged from the lab frame, or the
    closed-form RWA when ``method="rwa"``) is block-diagonalised so that each
    control state, with all modes empty, is decoupled from the rest.

    ``frame`` fixes the residual freedom inside each block. ``"direct"`` takes
    the single least-action rotation from the bare basis. ``"adiabatic"``
    starts from the undriven dressed states and follows the drive up from zero
    in ``steps`` least-action increments, which is the basis a slowly ramped
    pulse measures in. Both give the same branch precession rates; they differ
    by a small rotation that mixes IZ/ZZ with the transverse terms.
    """
    ops = system_operators(model)
    w = _drive_frequency(model, drive)
    full = replace(drive, frequency=w)
    if method == "average":
        def build(d):
            lab = lambda t: build_system_hamiltonian(model, d, t)
            return rotating_frame(lab, w, ops.number, rwa=True)(0.0)
    elif method == "rwa":
        def build(d):
            return rwa_hamiltonian(model, d)
    else:
        raise ValueError(f"unknown method {method!r}")
    h = build(full)
    comp = ops.comp_indices()
    rest = np.setdiff1d(np.arange(h.shape[0]), comp)
    groups = [comp[:2], comp[2:]] + [np.array([i]) for i in rest]
    if frame == "direct":
        _, h_bd = block_diagonalize(h, groups)
        return h_bd[np.ix_(comp, comp)]
    if frame != "adiabatic":
        raise ValueError(f"unknown frame {frame!r}")
    if steps < 1:
        raise ValueError("steps must be positive")
    # the frame Hamiltonian is affine in the drive amplitudes
    h0 = build(replace(full, control_amp=0.0, target_amp=0.0))
    _, u = _dressed_states(model, w)
    for k in range(1, steps + 1):
        hk = h0 + (k / steps) * (h - h0)
        t, _ = block_diagonalize(u.conj().T @ hk @ u, groups)
        u = u @ t
    h_bd = u.conj().T @ h @ u
    h_bd = h_bd[np.ix_(comp, comp)]
    return 0.5 * (h_bd + h_bd.conj().T)


def effective_pauli_coefficients(
    model: DeviceModel, drive: DriveSettings, method: str = "average", full: bool = False,
    frame: str = "adiabatic",
):
    """Six CR rates of the effective two-qubit Hamiltonian.

    With ``full=True`` all 16 Pauli components are returned as a dict instead.
    """
    h = effective_hamiltonian(model, drive, method, frame)
    comps = {k: float(np.real(v)) for k, v in pauli_decompose(h).items()}
    if full:
        return comps
    return PauliCoefficients(**{k: comps[k] for k in COEFF_LABELS})


def cable_mode_frequencies(
    length: float = 0.30, phase_velocity: float = 0.20, count: int = 2, first: int | None = None,
    near: float | None = None,
) -> list[float]:
    """Half-wavelength standing-mode frequencies ``2 pi n v / (2 L)`` in rad/ns.

    ``first`` is the lowest mode index; by default the run of ``count`` modes
    is centred on ``near`` (rad/ns, default 4.65 GHz).
    """
    if length <= 0:
        raise ValueError("cable length must be positive")
    if phase_velocity <= 0 or count < 1:
        raise ValueError("need positive phase velocity and count")
    spacing = TWO_PI * phase_velocity / (2 * length)
    if first is None:
        centre = _ghz(4.65) if near is None else near
        first = max(1, int(round(centre / spacing - (count - 1) / 2)))
    n = np.arange(first, first + count)
    return list(spacing * n)
