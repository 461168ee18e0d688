"""CR Hamiltonian tomography, two-qubit state tomography and process tomography."""

from __future__ import annotations

import itertools
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator

from .device import COEFF_LABELS, PauliCoefficients
from .pulses import (
    Gate,
    Play,
    PulseSchedule,
    ReadoutModel,
    apply_readout_correction,
    child_seed,
    make_cr_envelope,
    measurement_probabilities,
    sample_measurement,
)
from .quantum import PAULIS, PAULI_LABELS, _simplex_projection, chi_from_superop, project_chi, superop_from_ptm
from .validation import check_times, check_trajectories

__all__ = [
    "bloch_trajectory",
    "precession",
    "fit_cr_hamiltonian",
    "CRHamiltonianTomography",
    "CRRabiExperiment",
    "pauli_expectations",
    "state_tomography",
    "qpt_input_states",
    "process_tomography",
    "CoefficientErrors",
    "SweepResult",
    "cr_parameter_sweep",
]

X_GATE = PAULIS["X"]


class CoefficientErrors(NamedTuple):
    """Standard errors of the six rates; ``nan`` where the fit cannot resolve a rate."""

    IX: float
    IY: float
    IZ: float
    ZX: float
    ZY: float
    ZZ: float

    def as_array(self) -> np.ndarray:
        return np.array(self, dtype=float)


def precession(omega: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Bloch vector starting on +z and precessing as ``dr/dt = omega x r``."""
    omega = np.asarray(omega, dtype=float)
    t = np.asarray(times, dtype=float)
    mag = np.linalg.norm(omega)
    z = np.array([0.0, 0.0, 1.0])
    if mag < 1e-300:
        return np.tile(z, (len(t), 1))
    n = omega / mag
    par = n * n[2]
    perp = z - par
    cross = np.cross(n, z)
    ang = mag * t[:, None]
    return par + perp * np.cos(ang) + cross * np.sin(ang)


def bloch_trajectory(coeffs: PauliCoefficients, times, control: int) -> np.ndarray:
    """Target Bloch vector vs time for the control held in ``|control>``, target from ``|0>``."""
    if control not in (0, 1):
        raise ValueError("control must be 0 or 1")
    return precession(coeffs.branch_vectors()[control], times)


def _slope(t, y, k=5):
    k = min(k, len(t))
    if k < 2:
        return 0.0
    deg = min(2, k - 1)
    return np.polyfit(t[:k] - t[0], y[:k], deg)[-2]


def _branch_guesses(t, traj):
    """Candidate precession vectors from the initial slope and dominant frequency."""
    wx = -_slope(t, traj[:, 1])
    wy = _slope(t, traj[:, 0])
    guesses = []
    mags = []
    if len(t) > 4:
        dt = np.median(np.diff(t))
        pad = 8 * len(t)
        spec = np.abs(np.fft.rfft(traj[:, 2] - traj[:, 2].mean(), pad))
        freqs = 2 * np.pi * np.fft.rfftfreq(pad, dt)
        if spec[1:].max() > 1e-9:
            mags.append(freqs[1 + np.argmax(spec[1:])])
    perp = math.hypot(wx, wy)
    mags.append(perp)
    zbar = float(np.clip(traj[:, 2].mean(), 0, 1))
    for mag in mags:
        mag = max(mag, perp)
        wz = math.sqrt(max(mag**2 - perp**2, 0.0))
        guesses += [(wx, wy, wz), (wx, wy, -wz)]
    if perp > 0 and zbar < 1:
        wz = perp * math.sqrt(zbar / max(1 - zbar, 1e-6))
        guesses += [(wx, wy, wz), (wx, wy, -wz)]
    guesses.append((wx, wy, 0.0))
    guesses += _projection_guesses(t, traj)
    return [np.array(g, dtype=float) for g in guesses]


def _projection_guesses(t, traj, keep=3):
    """Scan the precession rate; at each rate the trajectory is linear in ``1, cos wt, sin wt``.

    For a rotation about unit axis ``n`` starting on +z the three coefficient
    vectors are ``n n_z``, ``z - n n_z`` and ``n x z``, so the best rates give
    the axis directly.
    """
    if len(t) < 7 or t[-1] <= t[0]:
        return []
    span = t[-1] - t[0]
    top = math.pi / max(np.min(np.diff(t)), 1e-12)
    rates = np.arange(0.5, top * span / (2 * math.pi), 0.125) * 2 * math.pi / span
    cost = np.empty(len(rates))
    coefs = []
    for i, w in enumerate(rates):
        basis = np.column_stack([np.ones_like(t), np.cos(w * t), np.sin(w * t)])
        c, *_ = np.linalg.lstsq(basis, traj, rcond=None)
        cost[i] = np.sum((basis @ c - traj) ** 2)
        coefs.append(c)
    padded = np.concatenate([[np.inf], cost, [np.inf]])
    minima = np.flatnonzero((cost <= padded[:-2]) & (cost <= padded[2:]))
    out = []
    for i in sorted(minima, key=lambda i: cost[i])[:keep]:
        a, _, c = coefs[i]
        nx, ny = -c[1], c[0]
        nz = math.copysign(math.sqrt(max(a[2], 0.0)), a[0] * nx + a[1] * ny)
        n = np.array([nx, ny, nz])
        if np.linalg.norm(n) > 1e-9:
            out.append(tuple(rates[i] * n / np.linalg.norm(n)))
    return out


def _fit_branch(t, traj, weights):
    fits = [least_squares(lambda w: ((precession(w, t) - traj) * weights).ravel(), g,
                          method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
            for g in _branch_guesses(t, traj)]
    low = min(r.cost for r in fits)
    # equal-cost solutions differ only in unresolved directions; take the smallest rate
    tied = [r for r in fits if r.cost <= low * (1 + 1e-6) + 1e-14]
    return min(tied, key=lambda r: np.linalg.norm(r.x)).x


def fit_cr_hamiltonian(times, traj0, traj1, sigma=None):
    """Fit the six effective CR rates to target Bloch trajectories.

    ``traj0`` and ``traj1`` have shape ``(n_times, 3)`` holding ``<X>, <Y>, <Z>``
    of the target with the control in ``|0>`` and ``|1>``. ``sigma`` is an
    optional array of the same shape (or a scalar) of standard deviations.
    Returns ``(coefficients, standard_errors)``; the errors come from the
    Jacobian at the optimum and are ``nan`` when fewer than seven points are
    available.
    """
    t = check_times(times)
    y = check_trajectories(np.stack([traj0, traj1], axis=1), len(t))
    if sigma is None:
        weights = np.ones_like(y)
    else:
        s = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        if np.any(s <= 0):
            raise ValueError("sigma must be positive")
        weights = 1.0 / s
    w0 = _fit_branch(t, y[:, 0], weights[:, 0])
    w1 = _fit_branch(t, y[:, 1], weights[:, 1])
    start = np.concatenate([(w0 + w1) / 4, (w0 - w1) / 4])

    def resid(p):
        c = PauliCoefficients.from_array(p)
        model = np.stack([bloch_trajectory(c, t, 0), bloch_trajectory(c, t, 1)], axis=1)
        return ((model - y) * weights).ravel()

    res = least_squares(resid, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    dof = res.fun.size - 6
    stderr = np.full(6, np.nan)
    if dof > 0:
        try:
            jtj = res.jac.T @ res.jac
            if np.linalg.cond(jtj) < 1e14:
                scale = 1.0 if sigma is not None else 2 * res.cost / dof
                stderr = np.sqrt(np.clip(np.diag(np.linalg.inv(jtj)) * scale, 0, None))
        except np.linalg.LinAlgError:
            pass
    return PauliCoefficients.from_array(res.x), CoefficientErrors(*map(float, stderr))


class CRHamiltonianTomography(BaseEstimator):
    """Estimator wrapper: ``fit(times, trajectories)`` with trajectories of shape ``(n, 2, 3)``.

    After fitting, ``coef_`` holds the :class:`PauliCoefficients`, ``stderr_``
    their standard errors and ``predict(times)`` returns model trajectories.
    """

    def __init__(self, sigma=None):
        self.sigma = sigma

    def fit(self, X, y):
        t = check_times(X)
        y = check_trajectories(y, len(t))
        self.coef_, self.stderr_ = fit_cr_hamiltonian(t, y[:, 0], y[:, 1], self.sigma)
        return self

    def predict(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "coef_")
        t = check_times(X)
        return np.stack([bloch_trajectory(self.coef_, t, 0), bloch_trajectory(self.coef_, t, 1)], axis=1)

    def score(self, X, y):
        """Negative root-mean-square trajectory residual."""
        pred = self.predict(X)
        return -float(np.sqrt(np.mean((pred - np.asarray(y)) ** 2)))


def _target_bloch(rho, shots, readout, correct, seed):
    out = np.empty(3)
    for k, axis in enumerate("XYZ"):
        if shots is None:
            p = measurement_probabilities(rho, ("Z", axis), readout)
        else:
            rec = sample_measurement(rho, ("Z", axis), shots, readout, child_seed(seed, k))
            p = rec.frequencies
        if correct and readout is not None:
            p = apply_readout_correction(p, readout)[0]
        out[k] = p[0] - p[1] + p[2] - p[3]
    return out


class CRRabiExperiment:
    """Drives the CR (plus optional cancellation) tone for a range of flat-top lengths.

    Trajectory times are ``flat + ramp_time``, the duration of a square pulse
    with the same area.
    """

    def __init__(self, simulator, amplitude, phase=0.0, target_amp=0.0, target_phase=0.0,
                 ramp_time=20.0, drag=0.0):
        self.simulator = simulator
        self.amplitude = amplitude
        self.phase = phase
        self.target_amp = target_amp
        self.target_phase = target_phase
        self.ramp_time = ramp_time
        self.drag = drag

    def schedule(self, flat: float, control: int) -> PulseSchedule:
        dur = flat + 2 * self.ramp_time
        dt = self.simulator.dt
        entries = []
        if control:
            entries.append(Gate("control", X_GATE, 0.0))
        entries.append(Play("control", make_cr_envelope(self.amplitude, self.phase, dur, self.ramp_time,
                                                        self.drag, dt)))
        if self.target_amp:
            entries.append(Play("target", make_cr_envelope(self.target_amp, self.target_phase, dur,
                                                           self.ramp_time, 0.0, dt)))
        return PulseSchedule(entries)

    def run(self, flats, shots=None, readout: ReadoutModel | None = None, correct=False, seed=0,
            noise_on=False):
        """Return ``(times, trajectories)`` with trajectories of shape ``(n, 2, 3)``."""
        flats = np.asarray(flats, dtype=float)
        rho0 = np.zeros((4, 4), dtype=complex)
        rho0[0, 0] = 1
        traj = np.empty((len(flats), 2, 3))
        for i, flat in enumerate(flats):
            for c in (0, 1):
                rho = self.simulator.run(self.schedule(flat, c), rho0, noise_on)
                traj[i, c] = _target_bloch(rho, shots, readout, correct, child_seed(seed, i, c))
        return flats + self.ramp_time, traj

    def fit(self, flats, **kwargs) -> CRHamiltonianTomography:
        times, traj = self.run(flats, **kwargs)
        shots = kwargs.get("shots")
        sigma = None if shots is None else np.sqrt(np.clip(1 - traj**2, 1e-4, None) / shots)
        return CRHamiltonianTomography(sigma=sigma).fit(times, traj)


# state and process tomography ---------------------------------------------

_SETTINGS = list(itertools.product("XYZ", repeat=2))
_EIG = {"I": np.array([1, 1]), "X": np.array([1, -1]), "Y": np.array([1, -1]), "Z": np.array([1, -1])}


def pauli_expectations(rho_or_probs: Callable | np.ndarray, shots=None, readout=None, correct=False,
                       seed=0) -> np.ndarray:
    """All 16 two-qubit Pauli expectations from the nine local-basis settings.

    Each non-identity factor's estimate is averaged over every setting that
    measures it. With ``shots=None`` exact probabilities are used.
    """
    rho = rho_or_probs
    sums = np.zeros(16)
    counts = np.zeros(16)
    for k, (a, b) in enumerate(_SETTINGS):
        if shots is None:
            p = measurement_probabilities(rho, (a, b), readout)
        else:
            p = sample_measurement(rho, (a, b), shots, readout, child_seed(seed, k)).frequencies
        if correct and readout is not None:
            p = apply_readout_correction(p, readout)[0]
        for la, lb in itertools.product(("I", a), ("I", b)):
            idx = PAULI_LABELS.index(la + lb)
            sums[idx] += np.kron(_EIG[la], _EIG[lb]) @ p
            counts[idx] += 1
    return sums / counts


def state_tomography(rho, shots=None, readout=None, correct=False, seed=0, physical=True) -> np.ndarray:
    """Linear-inversion state estimate; ``physical`` maps it to the nearest density matrix."""
    e = pauli_expectations(rho, shots, readout, correct, seed)
    est = sum(v * np.kron(PAULIS[l[0]], PAULIS[l[1]]) for v, l in zip(e, PAULI_LABELS)) / 4
    if physical:
        w, v = np.linalg.eigh(est)
        est = (v * _simplex_projection(w)) @ v.conj().T
    return est


_SINGLE_INPUTS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / math.sqrt(2),
}


def qpt_input_states() -> list[tuple[str, np.ndarray]]:
    """The 16 product inputs from ``{0, 1, +, +i}`` on each qubit."""
    out = []
    for a, b in itertools.product(_SINGLE_INPUTS, repeat=2):
        psi = np.kron(_SINGLE_INPUTS[a], _SINGLE_INPUTS[b])
        out.append((f"{a},{b}", np.outer(psi, psi.conj())))
    return out


def process_tomography(channel: Callable[[np.ndarray], np.ndarray], shots=None, readout=None,
                       correct=False, seed=0, physical=True):
    """Linear-inversion process tomography of a two-qubit channel.

    ``channel`` maps an input density matrix to the output one. Returns the
    Pauli-basis process matrix, projected onto the nearest physical one when
    ``physical`` is set.
    """
    inputs = qpt_input_states()
    r_in = np.array([[np.trace(np.kron(PAULIS[l[0]], PAULIS[l[1]]) @ rho).real for l in PAULI_LABELS]
                     for _, rho in inputs]).T
    r_out = np.array([pauli_expectations(channel(rho), shots, readout, correct, child_seed(seed, k))
                      for k, (_, rho) in enumerate(inputs)]).T
    ptm = r_out @ np.linalg.inv(r_in)
    chi = chi_from_superop(superop_from_ptm(ptm))
    return project_chi(chi) if physical else chi


class SweepResult:
    """Coefficients versus CR amplitude; rows that failed to fit hold ``nan``."""

    columns = ("amplitude",) + COEFF_LABELS + tuple(f"{c}_err" for c in COEFF_LABELS)

    def __init__(self, amplitudes, coefficients, stderr, ok, working_point=None):
        self.amplitudes = np.asarray(amplitudes, dtype=float)
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.stderr = np.asarray(stderr, dtype=float)
        self.ok = np.asarray(ok, dtype=bool)
        self.working_point = working_point

    def rows(self):
        for a, c, e in zip(self.amplitudes, self.coefficients, self.stderr):
            yield (float(a), *map(float, c), *map(float, e))


def _crossing(x, y, target):
    for i in range(len(x) - 1):
        y0, y1 = y[i], y[i + 1]
        if np.isfinite(y0) and np.isfinite(y1) and (y0 - target) * (y1 - target) <= 0 and y0 != y1:
            return float(x[i] + (target - y0) * (x[i + 1] - x[i]) / (y1 - y0))
    return None


def cr_parameter_sweep(simulator, amplitudes, phase=0.0, flats=None, shots=None, readout=None, correct=True,
                       seed=0, ramp_time=20.0, target_rate=None, noise_on=False) -> SweepResult:
    """CR Rabi experiment and Hamiltonian fit at each amplitude of the grid.

    ``target_rate`` (rad/ns) requests the amplitude where ``|ZX|`` first
    reaches it, found by linear interpolation.
    """
    amps = np.atleast_1d(np.asarray(amplitudes, dtype=float))
    if amps.size == 0:
        raise ValueError("amplitude grid is empty")
    if flats is None:
        flats = np.linspace(0, 400, 41)
    coefs = np.full((len(amps), 6), np.nan)
    errs = np.full((len(amps), 6), np.nan)
    ok = np.zeros(len(amps), dtype=bool)
    for i, a in enumerate(amps):
        exp = CRRabiExperiment(simulator, abs(a), phase + (np.pi if a < 0 else 0.0), ramp_time=ramp_time)
        try:
            est = exp.fit(flats, shots=shots, readout=readout, correct=correct, seed=child_seed(seed, i),
                          noise_on=noise_on)
        except (ValueError, np.linalg.LinAlgError):
            continue
        coefs[i] = est.coef_.as_array()
        errs[i] = est.stderr_.as_array()
        ok[i] = True
    wp = None if target_rate is None else _crossing(amps, np.abs(coefs[:, 3]), target_rate)
    return SweepResult(amps, coefs, errs, ok, wp)
