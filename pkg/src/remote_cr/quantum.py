"""Dense linear algebra for small multi-level quantum systems.

Operators and states are plain complex ``numpy`` arrays; :class:`HilbertSpec`
records how the total space factorises. Units are ns for time and rad/ns for
angular frequency everywhere in the package.

Superoperators act on row-major vectorised matrices, ``vec(A @ rho @ B) ==
kron(A, B.T) @ vec(rho)``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "PAULIS",
    "PAULI_LABELS",
    "HilbertSpec",
    "pauli_embed",
    "pauli_basis",
    "pauli_decompose",
    "check_density_matrix",
    "evolve",
    "state_fidelity",
    "process_fidelity",
    "superop_from_unitary",
    "superop_from_kraus",
    "apply_superop",
    "compose_superops",
    "superop_to_choi",
    "chi_from_superop",
    "chi_from_unitary",
    "ptm_from_superop",
    "superop_from_ptm",
    "depolarizing_superop",
    "project_chi",
    "ket",
    "dm",
]

PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

#: Two-qubit Pauli labels, left character on the control qubit.
PAULI_LABELS = tuple("".join(p) for p in itertools.product("IXYZ", repeat=2))

DEFAULT_DIM_CAP = 512


@dataclass(frozen=True)
class HilbertSpec:
    """Ordered subsystem dimensions of a tensor-product space."""

    dims: tuple[int, ...]
    cap: int = DEFAULT_DIM_CAP

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be positive, got {self.dims}")
        object.__setattr__(self, "dims", dims)
        if self.total > self.cap:
            raise ValueError(
                f"total dimension {self.total} exceeds the configured cap {self.cap}"
            )

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    def embed(self, op: np.ndarray, index: int) -> np.ndarray:
        """Lift a single-subsystem operator to the full space."""
        factors = [np.eye(d, dtype=complex) for d in self.dims]
        if op.shape != (self.dims[index],) * 2:
            raise ValueError("operator shape does not match subsystem dimension")
        factors[index] = np.asarray(op, dtype=complex)
        out = factors[0]
        for f in factors[1:]:
            out = np.kron(out, f)
        return out

    def check_operator(self, op: np.ndarray) -> np.ndarray:
        op = np.asarray(op)
        if op.shape != (self.total, self.total):
            raise ValueError(f"operator shape {op.shape} does not match dimension {self.total}")
        return op


def pauli_embed(label: str) -> np.ndarray:
    """Return the 4x4 matrix ``P1 (x) P2`` for a two-character Pauli label."""
    if not isinstance(label, str) or len(label) != 2 or any(c not in PAULIS for c in label):
        raise ValueError(f"invalid two-qubit Pauli label {label!r}")
    return np.kron(PAULIS[label[0]], PAULIS[label[1]])


def pauli_basis() -> np.ndarray:
    """All 16 two-qubit Paulis stacked in :data:`PAULI_LABELS` order."""
    return np.array([pauli_embed(p) for p in PAULI_LABELS])


_BASIS = pauli_basis()


def pauli_decompose(m: np.ndarray) -> dict[str, complex]:
    """Coefficients ``Tr(P m) / 4`` of a 4x4 matrix."""
    m = np.asarray(m)
    coeffs = np.einsum("kij,ji->k", _BASIS, m) / 4
    return dict(zip(PAULI_LABELS, coeffs))


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def dm(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def check_density_matrix(rho, atol_herm=1e-10, atol_trace=1e-9, atol_eig=1e-9) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if not np.all(np.isfinite(rho)):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > atol_herm:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > atol_trace:
        raise ValueError(f"density matrix trace {np.trace(rho).real:.3g} != 1")
    if np.linalg.eigvalsh(rho).min() < -atol_eig:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def _lindblad_rhs(h, rho, collapse):
    out = -1j * (h @ rho - rho @ h)
    for lk, lk_dag, lk_sq in collapse:
        out += lk @ rho @ lk_dag - 0.5 * (lk_sq @ rho + rho @ lk_sq)
    return out


def evolve(
    hamiltonian: Callable[[float], np.ndarray],
    t_span: tuple[float, float],
    dt: float,
    initial: np.ndarray,
    collapse_ops: Sequence[np.ndarray] = (),
) -> np.ndarray:
    """Integrate the Lindblad master equation with fixed-step RK4.

    Without collapse operators the propagator ``U`` is integrated instead and
    the state returned as ``U rho U^dag``, which keeps it exactly positive.
    The step is shrunk so that an integer number of steps spans ``t_span``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(initial, dtype=complex)
    dim = rho.shape[0]
    t0, t1 = map(float, t_span)
    n_steps = max(int(math.ceil((t1 - t0) / dt - 1e-12)), 0)
    if n_steps == 0:
        return rho.copy()
    h = (t1 - t0) / n_steps

    def ham(t):
        m = np.asarray(hamiltonian(t), dtype=complex)
        if m.shape != (dim, dim):
            raise ValueError(f"Hamiltonian shape {m.shape} does not match state dimension {dim}")
        if not np.all(np.isfinite(m)):
            raise ValueError("Hamiltonian has non-finite entries")
        return m

    if not collapse_ops:
        u = np.eye(dim, dtype=complex)
        for k in range(n_steps):
            t = t0 + k * h
            h_mid = ham(t + h / 2)
            k1 = -1j * ham(t) @ u
            k2 = -1j * h_mid @ (u + h / 2 * k1)
            k3 = -1j * h_mid @ (u + h / 2 * k2)
            k4 = -1j * ham(t + h) @ (u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return u @ rho @ u.conj().T

    collapse = []
    for op in collapse_ops:
        op = np.asarray(op, dtype=complex)
        if op.shape != (dim, dim):
            raise ValueError("collapse operator dimension mismatch")
        collapse.append((op, op.conj().T, op.conj().T @ op))
    for k in range(n_steps):
        t = t0 + k * h
        h_mid = ham(t + h / 2)
        k1 = _lindblad_rhs(ham(t), rho, collapse)
        k2 = _lindblad_rhs(h_mid, rho + h / 2 * k1, collapse)
        k3 = _lindblad_rhs(h_mid, rho + h / 2 * k2, collapse)
        k4 = _lindblad_rhs(ham(t + h), rho + h * k3, collapse)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    rho = 0.5 * (rho + rho.conj().T)
    if np.linalg.eigvalsh(rho).min() < -1e-6:
        raise FloatingPointError("integration produced a non-positive state; reduce dt")
    return rho


def _psd_sqrt(m):
    w, v = np.linalg.eigh(m)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape:
        raise ValueError("states have different dimensions")
    for m in (rho, sigma):
        if np.linalg.eigvalsh(0.5 * (m + m.conj().T)).min() < -1e-8:
            raise ValueError("state is not positive semidefinite")
    # pure-state shortcut avoids the matrix square root
    for a, b in ((rho, sigma), (sigma, rho)):
        w, v = np.linalg.eigh(a)
        if w[-1] > 1 - 1e-12:
            psi = v[:, -1]
            return float(np.clip(np.real(psi.conj() @ b @ psi), 0.0, 1.0))
    s = _psd_sqrt(rho)
    w = np.linalg.eigvalsh(s @ sigma @ s)
    return float(np.clip(np.sum(np.sqrt(np.clip(w, 0, None))) ** 2, 0.0, 1.0))


def process_fidelity(chi: np.ndarray, chi_ideal: np.ndarray, atol: float = 1e-6) -> float:
    """Return ``Tr(chi @ chi_ideal)`` for trace-normalised process matrices."""
    chi = np.asarray(chi)
    chi_ideal = np.asarray(chi_ideal)
    for m in (chi, chi_ideal):
        if abs(np.trace(m) - 1) > atol:
            raise ValueError("process matrix is not trace-normalised")
    return float(np.real(np.trace(chi @ chi_ideal)))


def superop_from_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    return np.kron(u, u.conj())


def superop_from_kraus(kraus: Sequence[np.ndarray]) -> np.ndarray:
    return sum(np.kron(k, np.conj(k)) for k in kraus)


def apply_superop(superop: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[0]
    return (superop @ rho.reshape(-1)).reshape(d, d)


def compose_superops(*superops: np.ndarray) -> np.ndarray:
    """Superoperator of applying the arguments left to right."""
    out = superops[0]
    for s in superops[1:]:
        out = s @ out
    return out


def superop_to_choi(superop: np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ij |i><j| (x) E(|i><j|)``."""
    d = int(round(math.sqrt(superop.shape[0])))
    # E(|i><j|)[a, b] = S[a*d + b, i*d + j]
    return superop.reshape(d, d, d, d).transpose(2, 0, 3, 1).reshape(d * d, d * d)


def chi_from_superop(superop: np.ndarray) -> np.ndarray:
    """Process matrix in the two-qubit Pauli basis, ``E(r) = sum chi_mn P_m r P_n``."""
    choi = superop_to_choi(superop)
    omega = np.eye(4, dtype=complex).reshape(-1)
    # w_m = (I (x) P_m)|Omega> = vec(P_m^T) in row-major order
    w = np.array([(np.kron(np.eye(4), p) @ omega) for p in _BASIS]).T
    return w.conj().T @ choi @ w / 16


def chi_from_unitary(u: np.ndarray) -> np.ndarray:
    c = np.einsum("kij,ji->k", _BASIS, np.asarray(u, dtype=complex)) / 4
    return np.outer(c, c.conj())


def ptm_from_superop(superop: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix ``R_ij = Tr(P_i E(P_j)) / 4`` (real for Hermiticity-preserving maps)."""
    vecs = _BASIS.reshape(16, -1)
    out = np.einsum("ia,ab,jb->ij", vecs.conj(), superop, vecs) / 4
    return out.real


def superop_from_ptm(ptm: np.ndarray) -> np.ndarray:
    vecs = _BASIS.reshape(16, -1)
    return np.einsum("ij,ia,jb->ab", ptm, vecs, vecs.conj()) / 4


def depolarizing_superop(p: float, dim: int = 4) -> np.ndarray:
    """``rho -> (1 - p) rho + p Tr(rho) I / dim``."""
    ident = np.eye(dim * dim, dtype=complex)
    omega = np.eye(dim, dtype=complex).reshape(-1)
    return (1 - p) * ident + p * np.outer(omega, omega) / dim


def _simplex_projection(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(w) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.clip(w - css[rho] / (rho + 1), 0, None)


def project_chi(chi: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius norm) Hermitian PSD unit-trace matrix.

    The eigenvalues are projected onto the simplex, so negative weight is
    removed evenly from the positive part rather than by rescaling.
    """
    herm = 0.5 * (chi + chi.conj().T)
    w, v = np.linalg.eigh(herm)
    w = _simplex_projection(w)
    return (v * w) @ v.conj().T
