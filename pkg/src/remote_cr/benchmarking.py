"""Interleaved cross-entropy benchmarking, Bell-state tomography and the CHSH angle scan.

Circuits run on two-qubit density matrices: the CNOT is a 16x16
superoperator (ideal, injected noise, or compiled from the pulse
simulator) and single-qubit layers are ideal unitaries followed by an
optional noise channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .pulses import (
    ReadoutModel,
    apply_readout_correction,
    child_seed,
    make_rng,
    measurement_probabilities,
    rotation,
    sample_measurement,
)
from .quantum import (
    PAULIS,
    apply_superop,
    depolarizing_superop,
    dm,
    state_fidelity,
    superop_from_kraus,
    superop_from_unitary,
)
from .tomography import state_tomography
from .validation import check_depths

__all__ = [
    "CNOT_MATRIX",
    "XEB_ANGLES",
    "TwoQubitDevice",
    "XebCircuit",
    "XebResult",
    "ChshResult",
    "sample_xeb_circuit",
    "ideal_probabilities",
    "xeb_fidelity",
    "fit_decay",
    "ExponentialDecay",
    "run_xeb",
    "cnot_fidelity_from_xeb",
    "bootstrap_stderr",
    "native_hadamard",
    "prepare_bell_and_tomography",
    "bell_state",
    "chsh_scan",
    "idle_superop",
]

D = 4
CNOT_MATRIX = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
XEB_ANGLES = np.arange(8) * np.pi / 4
_XEB_GATES = np.array([rotation(t, np.pi / 2) for t in XEB_ANGLES])


def idle_superop(duration: float, t1: float | None, t2: float | None) -> np.ndarray:
    """Single-qubit amplitude damping plus pure dephasing for ``duration`` ns (4x4)."""
    if duration == 0 or t1 is None:
        return np.eye(4, dtype=complex)
    gamma = 1 - math.exp(-duration / t1)
    coherence = math.exp(-duration / t2)
    # amplitude damping leaves coherence sqrt(1-gamma); dephase the rest
    lam = coherence / math.sqrt(1 - gamma)
    k_ad = [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), np.array([[0, math.sqrt(gamma)], [0, 0]])]
    p = (1 - lam) / 2
    k_ph = [math.sqrt(1 - p) * np.eye(2), math.sqrt(p) * PAULIS["Z"]]
    return superop_from_kraus(k_ph) @ superop_from_kraus(k_ad)


def _two_qubit_local(s_c: np.ndarray, s_t: np.ndarray) -> np.ndarray:
    """Tensor two single-qubit superoperators into the row-major two-qubit convention."""
    big = np.einsum("abcd,efgh->aebfcgdh", s_c.reshape(2, 2, 2, 2), s_t.reshape(2, 2, 2, 2))
    # indices: out (c_row, t_row, c_col, t_col), in (c_row, t_row, c_col, t_col)
    return big.reshape(16, 16)


@dataclass
class TwoQubitDevice:
    """Circuit-level model: CNOT channel, single-qubit layer noise, readout and preparation."""

    cnot: np.ndarray = field(default_factory=lambda: superop_from_unitary(CNOT_MATRIX))
    layer_noise: np.ndarray | None = None
    readout: ReadoutModel | None = None

    @classmethod
    def ideal(cls) -> "TwoQubitDevice":
        return cls()

    @classmethod
    def depolarized(cls, p: float, readout: ReadoutModel | None = None) -> "TwoQubitDevice":
        """Ideal CNOT followed by two-qubit depolarising noise of strength ``p``."""
        return cls(depolarizing_superop(p) @ superop_from_unitary(CNOT_MATRIX), None, readout)

    @classmethod
    def from_model(cls, cnot: np.ndarray, model=None, layer_time: float = 0.0, readout: bool = True):
        """Use a compiled CNOT channel and the model's coherence times and readout."""
        noise = None
        if model is not None and model.noisy and layer_time > 0:
            noise = _two_qubit_local(idle_superop(layer_time, model.t1[0], model.t2[0]),
                                     idle_superop(layer_time, model.t1[1], model.t2[1]))
        ro = ReadoutModel.from_device(model) if (model is not None and readout) else None
        return cls(np.asarray(cnot), noise, ro)

    def initial_state(self) -> np.ndarray:
        if self.readout is None:
            rho = np.zeros((4, 4), dtype=complex)
            rho[0, 0] = 1
            return rho
        return self.readout.initial_state()

    def apply_local(self, rho, u_c, u_t):
        u = np.kron(u_c, u_t)
        rho = u @ rho @ u.conj().T
        if self.layer_noise is not None:
            rho = apply_superop(self.layer_noise, rho)
        return rho

    def apply_cnot(self, rho):
        return apply_superop(self.cnot, rho)


# XEB -------------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class XebCircuit:
    """``angles[k]`` are the angle indices (``theta = k pi/4``) of layer k for control and target.

    ``final`` is an extra random single-qubit layer applied just before
    measurement, so even depth-1 circuits have non-uniform ideal outputs.
    """

    depth: int
    angles: np.ndarray
    final: np.ndarray
    interleaved: bool
    seed: int

    def layers(self):
        for k in range(self.depth):
            yield _XEB_GATES[self.angles[k, 0]], _XEB_GATES[self.angles[k, 1]], self.interleaved
        yield _XEB_GATES[self.final[0]], _XEB_GATES[self.final[1]], False


def sample_xeb_circuit(depth: int, interleave: bool, seed: int) -> XebCircuit:
    if depth < 1:
        raise ValueError("depth must be at least 1")
    rng = make_rng(seed)
    angles = rng.integers(0, 8, size=(depth, 2))
    final = rng.integers(0, 8, size=2)
    return XebCircuit(depth, angles, final, bool(interleave), seed)


def _run_circuit(device: TwoQubitDevice, circuit: XebCircuit) -> np.ndarray:
    rho = device.initial_state()
    for u_c, u_t, cnot in circuit.layers():
        rho = device.apply_local(rho, u_c, u_t)
        if cnot:
            rho = device.apply_cnot(rho)
    return rho


def ideal_probabilities(circuit: XebCircuit) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[0] = 1
    for u_c, u_t, cnot in circuit.layers():
        psi = np.kron(u_c, u_t) @ psi
        if cnot:
            psi = CNOT_MATRIX @ psi
    return np.abs(psi) ** 2


def xeb_fidelity(ideal: np.ndarray, counts: np.ndarray) -> float:
    """Linear cross-entropy ``D <p_ideal(observed)> - 1`` of one circuit."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("no shots recorded")
    return float(D * (np.asarray(ideal) @ counts) / total - 1)


def _xeb_reference(ideal: np.ndarray) -> float:
    """Value of :func:`xeb_fidelity` for a perfect device, ``D sum p^2 - 1``."""
    return float(D * np.sum(np.asarray(ideal) ** 2) - 1)


def _decay(params, m):
    a, p = params
    return a * p ** m


def fit_decay(depths, fidelities, sigma=None, full: bool = False):
    """Least-squares fit of ``F(m) = A p^m``; returns ``(p, stderr)`` or a dict with ``full=True``."""
    m = check_depths(depths)
    f = np.asarray(fidelities, dtype=float)
    if f.shape != m.shape or len(m) < 3:
        raise ValueError("need at least three depths with one fidelity each")
    if not np.all(np.isfinite(f)):
        raise ValueError("fidelities must be finite")
    if np.all(f <= 0):
        raise ValueError("all fidelities are non-positive; nothing to fit")
    w = np.ones_like(f) if sigma is None else 1 / np.asarray(sigma, dtype=float)
    pos = f > 0
    if pos.sum() >= 2 and len(np.unique(m[pos])) >= 2:
        slope, icpt = np.polyfit(m[pos], np.log(f[pos]), 1)
        start = [math.exp(icpt), min(math.exp(slope), 1.0)]
    else:
        start = [f.max(), 0.9]
    start[1] = float(np.clip(start[1], 1e-6, 1.0))
    res = least_squares(lambda q: (_decay(q, m) - f) * w, start, bounds=([-np.inf, 0], [np.inf, 1]),
                        method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14)
    dof = max(len(f) - 2, 1)
    try:
        cov = np.linalg.pinv(res.jac.T @ res.jac)
        if sigma is None:
            cov = cov * 2 * res.cost / dof
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.nan)
    a, p = res.x
    stderr = float(math.sqrt(max(cov[1, 1], 0.0)))
    if full:
        return {"A": float(a), "p": float(p), "stderr": stderr, "cov": cov}
    return float(p), stderr


class ExponentialDecay(BaseEstimator):
    """``F(m) = A p^m`` as an estimator: ``fit(depths, fidelities)``, then ``p_``, ``A_``, ``p_stderr_``."""

    def __init__(self, sigma=None):
        self.sigma = sigma

    def fit(self, X, y):
        r = fit_decay(np.ravel(X), y, self.sigma, full=True)
        self.A_, self.p_, self.p_stderr_, self.cov_ = r["A"], r["p"], r["stderr"], r["cov"]
        return self

    def predict(self, X):
        check_is_fitted(self, "p_")
        return self.A_ * self.p_ ** np.asarray(X, dtype=float).ravel()


@dataclass
class XebResult:
    depths: np.ndarray
    fidelity: np.ndarray
    values: np.ndarray
    reference: np.ndarray
    p: float
    p_stderr: float
    A: float
    cov: np.ndarray
    interleaved: bool
    seed: int

    def table(self):
        """Rows of ``(depth, circuit_index, fidelity)`` with per-circuit normalised fidelity.

        A circuit whose ideal output is uniform has zero reference and gives NaN.
        """
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(np.abs(self.reference) > 1e-12, self.values / self.reference, np.nan)
        return [(int(m), k, float(ratio[i, k])) for i, m in enumerate(self.depths) for k in range(ratio.shape[1])]


def _depth_fidelity(values, reference):
    """Normalised fidelity per depth, ``sum(D<p> - 1) / sum(D sum p^2 - 1)`` over circuits."""
    with np.errstate(invalid="ignore", divide="ignore"):
        return values.sum(axis=-1) / reference.sum(axis=-1)


def run_xeb(device: TwoQubitDevice, depths: Sequence[int] = (1, 3, 5, 7, 10, 15, 20, 30), n_circuits: int = 20,
            shots: int | None = 2000, seed: int = 0, interleave: bool = False) -> XebResult:
    """Sample circuits, simulate them on ``device`` and fit the fidelity decay.

    With ``shots=None`` exact output distributions replace sampled counts.
    """
    depths = np.asarray(depths, dtype=int)
    values = np.empty((len(depths), n_circuits))
    refs = np.empty_like(values)
    for i, m in enumerate(depths):
        for k in range(n_circuits):
            circ = sample_xeb_circuit(int(m), interleave, child_seed(seed, int(interleave), int(m), k, 0))
            ideal = ideal_probabilities(circ)
            rho = _run_circuit(device, circ)
            ro = device.readout
            if shots is None:
                counts = measurement_probabilities(rho, ("Z", "Z"), ro)
            else:
                counts = sample_measurement(rho, ("Z", "Z"), shots, ro,
                                            child_seed(seed, int(interleave), int(m), k, 1)).counts
            values[i, k] = xeb_fidelity(ideal, counts)
            refs[i, k] = _xeb_reference(ideal)
    fid = _depth_fidelity(values, refs)
    fit = fit_decay(depths, fid, full=True)
    return XebResult(depths, fid, values, refs, fit["p"], fit["stderr"], fit["A"], fit["cov"], interleave, seed)


def cnot_fidelity_from_xeb(p_ref: float, p_int: float, dim: int = D) -> float:
    """Average CNOT fidelity ``1 - (D - 1)(1 - p_int / p_ref) / D``."""
    if p_ref == 0:
        raise ZeroDivisionError("p_ref must be non-zero")
    return 1 - (dim - 1) * (1 - p_int / p_ref) / dim


def bootstrap_stderr(reference: XebResult | tuple, interleaved: XebResult | tuple, resamples: int = 10000,
                     seed: int = 0, return_samples: bool = False):
    """Bootstrap standard deviation of F_CNOT, resampling circuits within each depth.

    Each argument is an :class:`XebResult` or a tuple ``(depths, values)`` /
    ``(depths, values, reference)`` where ``values`` has shape
    ``(n_depths, n_circuits)``; missing references default to one.
    """
    if resamples < 100:
        raise ValueError("use at least 100 resamples")
    tables = []
    for r in (reference, interleaved):
        if isinstance(r, XebResult):
            tables.append((np.asarray(r.depths), r.values, r.reference))
        else:
            depths, vals = np.asarray(r[0]), np.asarray(r[1], dtype=float)
            ref = np.asarray(r[2], dtype=float) if len(r) > 2 else np.ones_like(vals)
            tables.append((depths, vals, ref))
    for depths, vals, _ in tables:
        if vals.size == 0:
            raise ValueError("empty fidelity table")
    rng = make_rng(seed)
    ps = []
    for depths, vals, ref in tables:
        n = vals.shape[1]
        idx = rng.integers(0, n, size=(resamples,) + vals.shape)
        v = np.take_along_axis(vals[None], idx, axis=2)
        rr = np.take_along_axis(ref[None], idx, axis=2)
        ps.append(_batch_p(np.asarray(depths, dtype=float), _depth_fidelity(v, rr),
                           fit_decay(depths, _depth_fidelity(vals, ref), full=True)))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = 1 - (D - 1) * (1 - ps[1] / ps[0]) / D
    # a resample whose depth table is degenerate (all-uniform circuits) cannot be fitted; drop it
    good = out[np.isfinite(out)]
    if good.size < 2:
        raise ValueError("no bootstrap resample could be fitted")
    std = float(np.std(good, ddof=1))
    return (std, out) if return_samples else std


def _batch_p(m, f, start, iterations=30):
    """Decay rate of ``A p^m`` for each row of ``f`` by Gauss-Newton from the full-data fit.

    Rows are bootstrap resamples, so they sit close to ``start``; a row that
    does not settle, or has no usable data, falls back to :func:`fit_decay`.
    """
    n = len(f)
    a = np.full(n, start["A"])
    p = np.full(n, min(max(start["p"], 1e-6), 1.0))
    ok = np.all(np.isfinite(f), axis=1)
    for _ in range(iterations):
        pm = p[:, None] ** m
        r = f - a[:, None] * pm
        ja, jp = pm, a[:, None] * m * p[:, None] ** (m - 1)
        h11, h12, h22 = (ja * ja).sum(1), (ja * jp).sum(1), (jp * jp).sum(1)
        g1, g2 = (ja * r).sum(1), (jp * r).sum(1)
        det = h11 * h22 - h12**2
        with np.errstate(invalid="ignore", divide="ignore"):
            da = (h22 * g1 - h12 * g2) / det
            dp = (h11 * g2 - h12 * g1) / det
        good = ok & np.isfinite(da) & np.isfinite(dp)
        a = np.where(good, a + da, a)
        p = np.where(good, np.clip(p + dp, 0.0, 1.0), p)
    pm = p[:, None] ** m
    r = f - a[:, None] * pm
    grad = np.abs((pm * r).sum(1)) + np.abs((a[:, None] * m * p[:, None] ** (m - 1) * r).sum(1))
    settled = ok & (p > 0) & (p < 1) & (grad < 1e-9 * (1 + (f * f).sum(1)))
    for i in np.flatnonzero(~settled):
        try:
            p[i] = fit_decay(m, f[i])[0]
        except ValueError:
            p[i] = np.nan
    return p


# Bell state and CHSH --------------------------------------------------------------

def native_hadamard() -> np.ndarray:
    """Frame change by pi/2 after an X pi/2 rotation; maps ``|0>`` to ``|+>``."""
    return np.diag([1, 1j]) @ rotation(0.0, np.pi / 2)


def bell_state() -> np.ndarray:
    return dm(np.array([1, 0, 0, 1]) / math.sqrt(2))


def _prepare_bell(device: TwoQubitDevice) -> np.ndarray:
    rho = device.initial_state()
    rho = device.apply_local(rho, native_hadamard(), np.eye(2))
    return device.apply_cnot(rho)


def prepare_bell_and_tomography(device: TwoQubitDevice, shots=None, seed=0, correct=False):
    """Prepare ``|Phi+>`` with a native Hadamard and the CNOT; return the tomographic state and its fidelity."""
    rho = _prepare_bell(device)
    est = state_tomography(rho, shots, device.readout, correct, seed)
    return est, state_fidelity(est, bell_state())


@dataclass
class ChshResult:
    theta: np.ndarray
    s_raw: np.ndarray
    s_corrected: np.ndarray
    stderr_raw: np.ndarray
    stderr_corrected: np.ndarray

    @property
    def max_raw(self) -> float:
        return float(np.max(np.abs(self.s_raw)))

    @property
    def max_corrected(self) -> float:
        return float(np.max(np.abs(self.s_corrected)))


_PARITY = np.array([1, -1, -1, 1])


def chsh_scan(device: TwoQubitDevice, thetas, shots=None, seed=0, state: np.ndarray | None = None) -> ChshResult:
    """Scan the target measurement angle; control measured along x and y.

    ``S = E(a,b) + E(a,b') + E(a',b) - E(a',b')`` with ``a = x``, ``a' = y``,
    ``b`` at equatorial angle theta and ``b' = theta + pi/2``. Corrected
    correlators invert the confusion matrices and are clipped to [-1, 1].
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if thetas.size == 0:
        raise ValueError("angle grid is empty")
    rho = _prepare_bell(device) if state is None else state
    ro = device.readout
    settings = [(0.0, 0, 1), (0.0, np.pi / 2, 1), (np.pi / 2, 0, 1), (np.pi / 2, np.pi / 2, -1)]
    s_raw, s_cor, e_raw, e_cor = [], [], [], []
    for i, th in enumerate(thetas):
        tot_r = tot_c = var_r = var_c = 0.0
        for k, (alpha, db, sign) in enumerate(settings):
            axes = (alpha, th + db)
            if shots is None:
                f = measurement_probabilities(rho, axes, ro)
                n = np.inf
            else:
                f = sample_measurement(rho, axes, shots, ro, child_seed(seed, i, k)).frequencies
                n = shots
            er = float(_PARITY @ f)
            ec = er
            gain = 1.0
            if ro is not None:
                raw, _ = apply_readout_correction(f, ro)
                ec = float(np.clip(_PARITY @ raw, -1, 1))
                gain = abs(ec / er) if abs(er) > 1e-12 else 1.0
            tot_r += sign * er
            tot_c += sign * ec
            var_r += (1 - er**2) / n
            var_c += gain**2 * (1 - er**2) / n
        s_raw.append(tot_r)
        s_cor.append(tot_c)
        e_raw.append(math.sqrt(var_r))
        e_cor.append(math.sqrt(var_c))
    return ChshResult(thetas, np.array(s_raw), np.array(s_cor), np.array(e_raw), np.array(e_cor))
