import math
from dataclasses import replace

import numpy as np
import pytest

from remote_cr.device import (
    TWO_PI,
    CableMode,
    DeviceModel,
    DriveSettings,
    PauliCoefficients,
    block_diagonalize,
    build_system_hamiltonian,
    cable_mode_frequencies,
    dressed_frequencies,
    effective_hamiltonian,
    effective_pauli_coefficients,
    rotating_frame,
    rwa_hamiltonian,
    system_operators,
)

import oracles

MHZ = TWO_PI * 1e-3


def small_model(levels=2, g=0.0125, alpha=0.0, line_phase=(0.0, 0.0)):
    f = cable_mode_frequencies(0.30, 0.20, 1, first=13)[0]
    mode = CableMode(13, f, TWO_PI * g, TWO_PI * g, alpha, alpha)
    return DeviceModel(modes=(mode,), levels=levels, line_phase=line_phase)


def oracle_modes(model):
    return [(m.frequency, m.g_control, m.g_target, (-1) ** m.index, m.alpha_control, m.alpha_target)
            for m in model.modes]


class TestTypes:
    def test_cable_mode_parity(self):
        assert CableMode(13, 1.0, 0.1, 0.1).parity == -1
        assert CableMode(14, 1.0, 0.1, 0.1).parity == 1

    @pytest.mark.parametrize("kw", [dict(index=0), dict(frequency=0.0), dict(levels=1)])
    def test_cable_mode_invalid(self, kw):
        base = dict(index=1, frequency=1.0, g_control=0.1, g_target=0.1)
        base.update(kw)
        with pytest.raises(ValueError):
            CableMode(**base)

    def test_degenerate_qubits(self):
        with pytest.raises(ValueError):
            DeviceModel(control_freq=30.0, target_freq=30.0)

    def test_t2_bound(self):
        with pytest.raises(ValueError):
            DeviceModel(t1=(10.0, 10.0), t2=(25.0, 10.0))

    def test_confusion_must_be_stochastic(self):
        with pytest.raises(ValueError):
            DeviceModel(confusion=(((0.9, 0.2), (0.0, 1.0)), ((1.0, 0.0), (0.0, 1.0))))

    def test_drive_phase_wrapped(self):
        assert DriveSettings(control_amp=0.1, control_phase=7.0).control_phase == pytest.approx(7.0 - TWO_PI)
        with pytest.raises(ValueError):
            DriveSettings(control_amp=-0.1)

    def test_pauli_coefficients_finite(self):
        with pytest.raises(ValueError):
            PauliCoefficients(IX=float("nan"))

    def test_branch_vectors(self):
        c = PauliCoefficients(1, 2, 3, 4, 5, 6)
        assert np.allclose(c.branch_vectors(), [[10, 14, 18], [-6, -6, -6]])


class TestSystemHamiltonian:
    def test_no_coupling_no_drive_is_diagonal(self):
        m = DeviceModel(levels=2)
        h = build_system_hamiltonian(m, DriveSettings(), 3.0)
        assert np.allclose(h, np.diag(np.diag(h)))
        # number-operator form: energies 0, w_t, w_c, w_c + w_t
        assert np.allclose(np.diag(h).real, [0, m.target_freq, m.control_freq, m.control_freq + m.target_freq])

    @pytest.mark.parametrize("levels", [2, 3])
    def test_matches_kronecker_oracle(self, levels):
        m = small_model(levels=levels, alpha=0.0)
        drive = DriveSettings(control_amp=0.2, control_phase=0.4, target_amp=0.05, target_phase=1.1,
                              frequency=29.5)
        t = 12.345
        h = build_system_hamiltonian(m, drive, t)
        ref = oracles.lab_hamiltonian(m.control_freq, m.target_freq, m.control_anharm, m.target_anharm,
                                      oracle_modes(m), levels, (0.2, 0.4), (0.05, 1.1), 29.5, t)
        assert np.allclose(h, ref, atol=1e-12)

    def test_leakage_terms_match_oracle(self):
        m = small_model(levels=2, alpha=0.02, line_phase=(0.0, 0.0))
        drive = DriveSettings(control_amp=0.2, target_amp=0.1, target_phase=0.5, frequency=29.5)
        h = build_system_hamiltonian(m, drive, 4.0)
        ref = oracles.lab_hamiltonian(m.control_freq, m.target_freq, m.control_anharm, m.target_anharm,
                                      oracle_modes(m), 2, (0.2, 0.0), (0.1, 0.5), 29.5, 4.0)
        assert np.allclose(h, ref, atol=1e-12)

    def test_hermitian(self):
        m = DeviceModel.default()
        rng = np.random.default_rng(0)
        for t in rng.uniform(0, 100, 5):
            h = build_system_hamiltonian(m, DriveSettings(0.2, 1.0, 0.01, 2.0), t)
            assert np.array_equal(h, h.conj().T)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            build_system_hamiltonian(DeviceModel(), DriveSettings(), -1.0)


class TestRotatingFrame:
    def test_frame_shifts_target_energy(self):
        m = DeviceModel(levels=2)
        ops = system_operators(m)
        lab = lambda t: build_system_hamiltonian(m, DriveSettings(frequency=m.target_freq), t)
        h = rotating_frame(lab, m.target_freq, ops.number)(5.0)
        # control sits at w_c - w_t per excitation, target is resonant
        assert np.allclose(np.diag(h).real, [0, 0, m.control_freq - m.target_freq] * 1 + [m.control_freq - m.target_freq])

    def test_drive_rwa_identity(self):
        m = DeviceModel(levels=2)
        w = m.target_freq
        omega = 0.05
        ops = system_operators(m)
        lab = lambda t: build_system_hamiltonian(m, DriveSettings(target_amp=omega, frequency=w), t)
        avg = rotating_frame(lab, w, ops.number, rwa=True)(0.0)
        static = rotating_frame(lambda t: build_system_hamiltonian(m, DriveSettings(frequency=w), t),
                                w, ops.number)(0.0)
        expected = omega / 2 * np.kron(np.eye(2), oracles.X)
        assert np.allclose(avg - static, expected, atol=1e-4 * omega)

    def test_average_matches_closed_form_rwa(self):
        m = small_model(levels=3, alpha=0.01)
        drive = DriveSettings(control_amp=0.15, control_phase=0.3)
        a = effective_hamiltonian(m, drive, "average")
        b = effective_hamiltonian(m, drive, "rwa")
        assert np.max(abs(a - b)) < 0.02 * np.linalg.norm(b, 2)

    def test_rwa_matches_oracle(self):
        m = small_model(levels=3, alpha=0.01, line_phase=(0.0, 0.0))
        w = 29.6
        drive = DriveSettings(control_amp=0.15, control_phase=0.3, target_amp=0.02, target_phase=2.0, frequency=w)
        ref, _ = oracles.rwa_hamiltonian(m.control_freq, m.target_freq, m.control_anharm, m.target_anharm,
                                         oracle_modes(m), 3, (0.15, 0.3), (0.02, 2.0), w)
        assert np.allclose(rwa_hamiltonian(m, drive), ref, atol=1e-12)


class TestEffectiveCoefficients:
    def test_zero_drive_zero_coupling(self):
        c = effective_pauli_coefficients(DeviceModel(levels=2), DriveSettings())
        assert np.allclose(c.as_array(), 0, atol=1e-12)

    def test_no_coupling_no_entangling_terms(self):
        m = small_model(levels=3, g=0.0)
        c = effective_pauli_coefficients(m, DriveSettings(control_amp=0.2))
        assert abs(c.ZX) < 1e-12 and abs(c.ZY) < 1e-12 and abs(c.ZZ) < 1e-12

    @pytest.mark.parametrize("levels", [2, 3])
    def test_matches_least_action_oracle(self, levels):
        m = replace(DeviceModel.default(levels=levels), line_phase=(0.0, 0.0))
        w = dressed_frequencies(m)[1]
        drive = DriveSettings(control_amp=0.1, frequency=w)
        h, dims = oracles.rwa_hamiltonian(m.control_freq, m.target_freq, m.control_anharm, m.target_anharm,
                                          oracle_modes(m), levels, (0.1, 0.0), (0.0, 0.0), w)
        ref = oracles.coefficients(oracles.effective_block(h, dims))
        got = effective_pauli_coefficients(m, drive, "rwa", frame="direct").as_array()
        assert np.allclose(got, ref, atol=1e-9)

    def test_frozen_default_values(self):
        # least-action oracle on the default device at 0.1 rad/ns, phase 0, line phase (0.6, -0.4)
        c = effective_pauli_coefficients(DeviceModel.default(), DriveSettings(control_amp=0.1), "rwa",
                                         frame="direct")
        frozen = [0.00106604, -0.00072932, -0.00015474, -0.00233936, 0.00160044, 0.00012932]
        assert np.allclose(c.as_array(), frozen, atol=2e-8)

    def test_frames_share_branch_rates(self):
        m = DeviceModel.default()
        drive = DriveSettings(control_amp=0.15, control_phase=0.4)
        a = effective_pauli_coefficients(m, drive, "rwa", frame="direct")
        b = effective_pauli_coefficients(m, drive, "rwa", frame="adiabatic")
        assert np.allclose(np.linalg.norm(a.branch_vectors(), axis=1), np.linalg.norm(b.branch_vectors(), axis=1),
                           rtol=1e-6)
        assert not np.allclose(a.as_array(), b.as_array(), atol=1e-6)

    def test_adiabatic_steps_converge(self):
        m = DeviceModel.default()
        drive = DriveSettings(control_amp=0.1)
        h16 = effective_hamiltonian(m, drive, "rwa", "adiabatic", 16)
        h64 = effective_hamiltonian(m, drive, "rwa", "adiabatic", 64)
        assert np.max(np.abs(h16 - h64)) < 1e-6
        with pytest.raises(ValueError):
            effective_hamiltonian(m, drive, "rwa", "sideways")

    def test_time_average_has_cr_form(self):
        m = DeviceModel.default()
        full = effective_pauli_coefficients(m, DriveSettings(control_amp=0.2), "average", full=True)
        six = np.array([full[k] for k in ("IX", "IY", "IZ", "ZX", "ZY", "ZZ")])
        off = np.array([full[k] for k in ("XX", "XY", "YX", "YY", "XI", "YI")])
        assert np.linalg.norm(off) < 0.02 * np.linalg.norm(six)

    def test_phase_flip(self):
        m = DeviceModel.default(levels=2)
        a = effective_pauli_coefficients(m, DriveSettings(control_amp=0.15, control_phase=0.7), "rwa")
        b = effective_pauli_coefficients(m, DriveSettings(control_amp=0.15, control_phase=0.7 + math.pi), "rwa")
        assert np.allclose([b.IX, b.IY, b.ZX, b.ZY], [-a.IX, -a.IY, -a.ZX, -a.ZY], atol=1e-10)
        assert np.allclose([b.IZ, b.ZZ], [a.IZ, a.ZZ], atol=1e-10)

    def test_phase_covariance(self):
        m = DeviceModel.default(levels=2)
        amp = 0.1
        a = effective_pauli_coefficients(m, DriveSettings(control_amp=amp), "rwa")
        for phi in (0.4, 2.0):
            b = effective_pauli_coefficients(m, DriveSettings(control_amp=amp, control_phase=phi), "rwa")
            assert b.ZX == pytest.approx(a.ZX * math.cos(phi) + a.ZY * math.sin(phi), abs=1e-9)
            assert b.ZY == pytest.approx(a.ZY * math.cos(phi) - a.ZX * math.sin(phi), abs=1e-9)

    def test_global_offset_invariance(self):
        m = DeviceModel.default(levels=2)
        drive = DriveSettings(control_amp=0.1, frequency=dressed_frequencies(m)[1])
        ops = system_operators(m)
        comp = ops.comp_indices()
        rest = np.setdiff1d(np.arange(ops.hilbert.total), comp)
        groups = [comp[:2], comp[2:]] + [np.array([i]) for i in rest]
        out = []
        for offset in (0.0, 3.7):
            lab = lambda t: build_system_hamiltonian(m, drive, t) + offset * np.eye(ops.hilbert.total)
            h = rotating_frame(lab, drive.frequency, ops.number, rwa=True, periods=20)(0.0)
            out.append(oracles.coefficients(block_diagonalize(h, groups)[1][np.ix_(comp, comp)]))
        assert np.allclose(out[0], out[1], atol=1e-10)

    def test_zx_shape_over_amplitude(self):
        m = DeviceModel.default()
        amps = np.linspace(0.02, 0.5, 13)
        zx = []
        for a in amps:
            c = effective_pauli_coefficients(m, DriveSettings(control_amp=a), "rwa")
            zx.append(math.hypot(c.ZX, c.ZY))
        zx = np.array(zx)
        assert np.all(np.diff(zx[: len(zx) // 2 + 1]) > 0)
        # linear start then sub-linear: rate per unit amplitude falls
        assert np.all(np.diff(zx / amps) < 0)


class TestBlockDiagonalize:
    def test_unitary_and_block_structure(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
        h = np.diag([0, 0.1, 5, 5.2, 9]) + 0.05 * (a + a.conj().T)
        groups = [np.array([0, 1]), np.array([2, 3]), np.array([4])]
        t, hbd = block_diagonalize(h, groups)
        assert np.allclose(t.conj().T @ t, np.eye(5))
        assert np.allclose(np.sort(np.linalg.eigvalsh(hbd)), np.linalg.eigvalsh(h))
        assert np.allclose(hbd[:2, 2:], 0)

    def test_already_block_diagonal(self):
        h = np.diag([1.0, 2.0, 3.0]).astype(complex)
        h[0, 1] = h[1, 0] = 0.3
        t, hbd = block_diagonalize(h, [np.array([0, 1]), np.array([2])])
        assert np.allclose(t, np.eye(3))
        assert np.allclose(hbd, h)


class TestCableModes:
    def test_spacing(self):
        f = cable_mode_frequencies(0.30, 0.21, 3)
        assert np.allclose(np.diff(f) / TWO_PI, 0.35)

    def test_scaling(self):
        a = np.diff(cable_mode_frequencies(0.30, 0.21, 2, first=5))
        b = np.diff(cable_mode_frequencies(0.60, 0.21, 2, first=5))
        assert b[0] == pytest.approx(a[0] / 2)

    def test_equidistant(self):
        d = np.diff(cable_mode_frequencies(0.3, 0.2, 6))
        assert np.allclose(d, d[0], rtol=0, atol=1e-13)

    def test_brackets_qubits(self):
        f = np.array(cable_mode_frequencies(0.30, 0.21, 2)) / TWO_PI
        assert f.min() <= 4.65 <= f.max() + 0.35

    def test_zero_length(self):
        with pytest.raises(ValueError):
            cable_mode_frequencies(0.0, 0.2, 2)
