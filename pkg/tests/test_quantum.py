import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from remote_cr.quantum import (
    PAULI_LABELS,
    HilbertSpec,
    apply_superop,
    check_density_matrix,
    chi_from_superop,
    chi_from_unitary,
    depolarizing_superop,
    dm,
    evolve,
    pauli_decompose,
    pauli_embed,
    process_fidelity,
    project_chi,
    ptm_from_superop,
    state_fidelity,
    superop_from_kraus,
    superop_from_ptm,
    superop_from_unitary,
)

from oracles import CNOT, X, Y, Z, chi_of_unitary, lindblad_exact, pauli2


def random_unitary(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / abs(np.diag(r)))


def random_density(rng, d, rank=None):
    rank = rank or d
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


class TestHilbertSpec:
    def test_total_and_cap(self):
        assert HilbertSpec((3, 3, 2, 2)).total == 36
        with pytest.raises(ValueError):
            HilbertSpec((8, 8, 9))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            HilbertSpec((2, 0))

    def test_embed_matches_kron(self):
        spec = HilbertSpec((2, 3, 2))
        op = np.arange(9).reshape(3, 3).astype(complex)
        assert np.allclose(spec.embed(op, 1), np.kron(np.kron(np.eye(2), op), np.eye(2)))


class TestPauli:
    def test_identity(self):
        assert np.array_equal(pauli_embed("II"), np.eye(4))

    def test_zx_blocks(self):
        m = pauli_embed("ZX")
        assert np.allclose(m[:2, :2], X)
        assert np.allclose(m[2:, 2:], -X)
        assert np.allclose(m[:2, 2:], 0)

    def test_orthogonality_all_pairs(self):
        for p in PAULI_LABELS:
            for q in PAULI_LABELS:
                expected = 4.0 if p == q else 0.0
                assert np.trace(pauli_embed(p) @ pauli_embed(q)) == pytest.approx(expected)

    @pytest.mark.parametrize("bad", ["", "X", "XYZ", "AB", "xz"])
    def test_invalid_label(self, bad):
        with pytest.raises(ValueError):
            pauli_embed(bad)

    def test_control_is_left_factor(self):
        assert np.allclose(pauli_embed("XI"), np.kron(X, np.eye(2)))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_completeness(self, seed):
        m = random_hermitian(np.random.default_rng(seed), 4)
        coeffs = pauli_decompose(m)
        rebuilt = sum(c * pauli_embed(k) for k, c in coeffs.items())
        assert np.allclose(rebuilt, m, atol=1e-13)


class TestEvolve:
    def test_zero_hamiltonian(self):
        rho = random_density(np.random.default_rng(0), 4)
        out = evolve(lambda t: np.zeros((4, 4)), (0, 10), 0.1, rho)
        assert np.allclose(out, rho)

    def test_rabi_half_period(self):
        omega = 0.3
        rho = dm(np.array([1, 0]))
        out = evolve(lambda t: omega / 2 * X, (0, np.pi / omega), 0.01, rho)
        assert np.allclose(out, dm(np.array([0, 1])), atol=1e-8)

    def test_constant_two_qubit_matches_eigendecomposition(self):
        rng = np.random.default_rng(1)
        h = random_hermitian(rng, 4) * 0.2
        rho = random_density(rng, 4)
        w, v = np.linalg.eigh(h)
        u = (v * np.exp(-1j * w * 7.0)) @ v.conj().T
        out = evolve(lambda t: h, (0, 7.0), 0.01, rho)
        assert np.allclose(out, u @ rho @ u.conj().T, atol=1e-8)

    def test_lindblad_matches_liouvillian_exponential(self):
        rng = np.random.default_rng(2)
        h = random_hermitian(rng, 2) * 0.3
        gamma = 0.05
        lk = [np.sqrt(gamma) * np.array([[0, 1], [0, 0]], dtype=complex), np.sqrt(0.02) * Z]
        rho = random_density(rng, 2)
        out = evolve(lambda t: h, (0, 5.0), 0.01, rho, lk)
        assert np.allclose(out, lindblad_exact(h, lk, rho, 5.0), atol=1e-8)

    def test_trace_preserved_with_dissipation(self):
        rng = np.random.default_rng(3)
        h = random_hermitian(rng, 4)
        dt = 0.05 / np.linalg.norm(h, 2)
        lk = [0.1 * np.kron(np.array([[0, 1], [0, 0]]), np.eye(2))]
        out = evolve(lambda t: h, (0, 2.0), dt, random_density(rng, 4), lk)
        assert abs(np.trace(out) - 1) < 1e-7

    def test_time_reversal(self):
        rng = np.random.default_rng(4)
        h1, h2 = random_hermitian(rng, 4) * 0.1, random_hermitian(rng, 4) * 0.1
        hf = lambda t: h1 + np.sin(0.3 * t) * h2
        rho = random_density(rng, 4)
        fwd = evolve(hf, (0, 10), 0.01, rho)
        back = evolve(lambda t: -hf(10 - t), (0, 10), 0.01, fwd)
        assert np.allclose(back, rho, atol=1e-7)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            evolve(lambda t: np.eye(3), (0, 1), 0.1, np.eye(2) / 2)

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            evolve(lambda t: np.full((2, 2), np.nan), (0, 1), 0.1, np.eye(2) / 2)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            evolve(lambda t: np.eye(2), (0, 1), 0.0, np.eye(2) / 2)


class TestStateFidelity:
    def test_pure_identical(self):
        psi = np.array([1, 1j]) / np.sqrt(2)
        assert state_fidelity(dm(psi), dm(psi)) == pytest.approx(1)

    def test_orthogonal(self):
        assert state_fidelity(dm(np.array([1, 0])), dm(np.array([0, 1]))) == pytest.approx(0)

    def test_mixed_vs_bell(self):
        bell = dm(np.array([1, 0, 0, 1]) / np.sqrt(2))
        assert state_fidelity(np.eye(4) / 4, bell) == pytest.approx(0.25)

    def test_symmetric_for_mixed(self):
        rng = np.random.default_rng(5)
        a, b = random_density(rng, 4), random_density(rng, 4)
        assert state_fidelity(a, b) == pytest.approx(state_fidelity(b, a), abs=1e-9)

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            state_fidelity(np.diag([1.5, -0.5]), np.eye(2) / 2)

    def test_density_checks(self):
        check_density_matrix(np.eye(2) / 2)
        with pytest.raises(ValueError):
            check_density_matrix(np.eye(2))
        with pytest.raises(ValueError):
            check_density_matrix(np.array([[0.5, 0.5], [0, 0.5]]))


class TestProcess:
    def test_chi_from_unitary_matches_oracle(self):
        assert np.allclose(chi_from_unitary(CNOT), chi_of_unitary(CNOT))

    def test_chi_from_superop_matches_unitary(self):
        u = random_unitary(np.random.default_rng(6), 4)
        assert np.allclose(chi_from_superop(superop_from_unitary(u)), chi_of_unitary(u), atol=1e-12)

    def test_identity_fidelity(self):
        chi = chi_from_unitary(CNOT)
        assert process_fidelity(chi, chi) == pytest.approx(1)

    @pytest.mark.parametrize("p", [0.0, 0.0133, 0.2])
    def test_depolarizing_closed_form(self, p):
        u = random_unitary(np.random.default_rng(7), 4)
        s = depolarizing_superop(p) @ superop_from_unitary(u)
        chi = chi_from_superop(s)
        ideal = chi_of_unitary(u)
        assert process_fidelity(chi, ideal) == pytest.approx((1 - p) + p / 16, abs=1e-12)

    def test_xx_vs_cnot(self):
        xx = pauli2("XX")
        expected = abs(np.trace(CNOT.conj().T @ xx) / 4) ** 2
        f = process_fidelity(chi_from_unitary(xx), chi_from_unitary(CNOT))
        assert f == pytest.approx(expected, abs=1e-12)
        assert f == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(8)
        a = chi_from_superop(depolarizing_superop(0.1) @ superop_from_unitary(random_unitary(rng, 4)))
        b = chi_from_unitary(random_unitary(rng, 4))
        assert process_fidelity(a, b) == pytest.approx(process_fidelity(b, a))

    def test_trace_check(self):
        with pytest.raises(ValueError):
            process_fidelity(2 * chi_from_unitary(CNOT), chi_from_unitary(CNOT))

    def test_ptm_round_trip(self):
        s = depolarizing_superop(0.05) @ superop_from_unitary(random_unitary(np.random.default_rng(9), 4))
        assert np.allclose(superop_from_ptm(ptm_from_superop(s)), s)

    def test_superop_row_major_action(self):
        rng = np.random.default_rng(10)
        u = random_unitary(rng, 4)
        rho = random_density(rng, 4)
        assert np.allclose(apply_superop(superop_from_unitary(u), rho), u @ rho @ u.conj().T)

    def test_kraus(self):
        g = 0.3
        k = [np.array([[1, 0], [0, np.sqrt(1 - g)]]), np.array([[0, np.sqrt(g)], [0, 0]])]
        rho = dm(np.array([0, 1]))
        assert np.allclose(apply_superop(superop_from_kraus(k), rho), np.diag([g, 1 - g]))


class TestProjection:
    def test_physical_unchanged(self):
        chi = chi_from_unitary(CNOT)
        assert np.allclose(project_chi(chi), chi)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_projection_is_physical(self, seed):
        rng = np.random.default_rng(seed)
        chi = chi_from_unitary(CNOT) + 0.05 * random_hermitian(rng, 16)
        chi = chi / np.trace(chi)
        out = project_chi(chi)
        assert np.allclose(out, out.conj().T)
        assert np.trace(out).real == pytest.approx(1)
        assert np.linalg.eigvalsh(out).min() > -1e-12

    def test_nearest_in_frobenius(self):
        # a diagonal input projects by the simplex rule on its entries
        chi = np.diag([0.9, 0.2, -0.1] + [0.0] * 13).astype(complex)
        out = np.real(np.diag(project_chi(chi)))
        assert np.allclose(out[:3], [0.85, 0.15, 0.0])
        assert np.allclose(out[3:], 0)
