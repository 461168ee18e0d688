import math

import numpy as np
import pytest
from scipy.linalg import expm

from remote_cr.calibration import (
    CNOT,
    CalibrationError,
    CnotPulseParams,
    ModelBackend,
    calibrate_cancellation_rough,
    calibrate_cnot,
    calibrate_cr_phase,
    calibrate_frame_change,
    fine_calibrate,
    gate_fidelity,
    parabolic_vertex,
)
from remote_cr.device import PauliCoefficients

import oracles

T_EFF = 130.0  # flat-equivalent gate time: duration 170 minus ramp 40
AMP_STAR = 0.2


def planted_device(phi0=0.0, crosstalk=-1.0, phi1=None, k=None, iz=0.0):
    """Linear CR model: ZX + i ZY = k a exp(-i (phi - phi0)), unconditional term rotates likewise.

    A resonant cancellation tone of amplitude e and phase t adds (e/2)(cos t, sin t) to (IX, IY).
    """
    k = math.pi / (4 * T_EFF * AMP_STAR) if k is None else k
    phi1 = phi0 if phi1 is None else phi1

    def coefficients(p):
        cz = k * p.cr_amp * np.exp(-1j * (p.cr_phase - phi0))
        ci = crosstalk * k * p.cr_amp * np.exp(-1j * (p.cr_phase - phi1)) + 0.5 * p.cancel_amp * np.exp(
            1j * p.cancel_phase)
        return PauliCoefficients(IX=ci.real, IY=ci.imag, IZ=iz, ZX=cz.real, ZY=cz.imag)

    return ModelBackend(coefficients=coefficients)


def angle_diff(a, b):
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


FLATS = np.linspace(0, 400, 21)


class TestParams:
    def test_json_roundtrip(self):
        p = CnotPulseParams(0.1, 0.2, drag=-1.5, cancel_amp=0.01, frame_change=0.3)
        assert CnotPulseParams.from_json(p.to_json()) == p

    @pytest.mark.parametrize("kw", [dict(cr_amp=float("nan")), dict(cr_amp=0.1, duration=0),
                                    dict(cr_amp=-0.1)])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            CnotPulseParams(**kw)

    def test_parabolic_vertex(self):
        xs = [0.0, 1.0, 3.0]
        assert parabolic_vertex(xs, [(x - 1.3) ** 2 + 2 for x in xs]) == pytest.approx(1.3)
        # concave: fall back to the best sample
        assert parabolic_vertex(xs, [0.0, 1.0, 0.5]) == 0.0


class TestPhase:
    @pytest.mark.parametrize("phi0", [0.005, 1.0, 3.0, -0.4])
    def test_planted_phase(self, phi0):
        phi, report = calibrate_cr_phase(planted_device(phi0), CnotPulseParams(AMP_STAR), 24, FLATS)
        assert angle_diff(phi, phi0) < math.radians(1)
        assert report.history[0]["fit_rms"] < 1e-8

    def test_covariance(self):
        base, _ = calibrate_cr_phase(planted_device(0.3), CnotPulseParams(AMP_STAR), 24, FLATS)
        shifted, _ = calibrate_cr_phase(planted_device(0.3 + 0.7), CnotPulseParams(AMP_STAR), 24, FLATS)
        assert angle_diff(shifted - base, 0.7) < 1e-6

    def test_no_cr_raises(self):
        with pytest.raises(CalibrationError):
            calibrate_cr_phase(planted_device(k=0.0), CnotPulseParams(AMP_STAR), 12, FLATS)

    def test_needs_coefficient_model(self):
        with pytest.raises(CalibrationError):
            calibrate_cr_phase(ModelBackend(unitary=lambda p: np.eye(4)), CnotPulseParams(AMP_STAR), 12, FLATS)


class TestCancellation:
    def test_nothing_to_cancel(self):
        p, _ = calibrate_cancellation_rough(planted_device(), CnotPulseParams(AMP_STAR), 0.02)
        assert p.cancel_amp < 2e-4

    def test_planted_tone(self):
        dev = planted_device(crosstalk=-0.8, phi1=0.2)
        k = math.pi / (4 * T_EFF * AMP_STAR)
        # branch-0 residual at zero CR phase: (crosstalk e^{i phi1} + 1) k a
        resid = (-0.8 * np.exp(1j * 0.2) + 1) * k * AMP_STAR
        expected = -2 * resid
        p, report = calibrate_cancellation_rough(dev, CnotPulseParams(AMP_STAR), 4 * abs(expected))
        assert p.cancel_amp == pytest.approx(abs(expected), rel=0.02)
        assert angle_diff(p.cancel_phase, np.angle(expected)) < 0.02
        assert report.history[-1]["objective"] < 1e-3

    def test_boundary_raises(self):
        dev = planted_device(crosstalk=0.0)
        with pytest.raises(CalibrationError):
            calibrate_cancellation_rough(dev, CnotPulseParams(AMP_STAR), 1e-4)


class TestFineLoop:
    def test_recovers_amplitude(self):
        start = CnotPulseParams(AMP_STAR * 1.02)
        p, report = fine_calibrate(planted_device(), start, loops="b")
        assert p.cr_amp == pytest.approx(AMP_STAR, rel=5e-4)

    def test_fixed_point(self):
        p, _ = fine_calibrate(planted_device(), CnotPulseParams(AMP_STAR), loops="abc")
        assert p.cr_amp == pytest.approx(AMP_STAR, rel=1e-9)
        assert p.cancel_amp == pytest.approx(0.0, abs=1e-9)

    def test_reference_objective_non_increasing(self):
        dev = planted_device(crosstalk=-0.9, phi1=0.1)
        start, _ = calibrate_cancellation_rough(dev, CnotPulseParams(AMP_STAR * 0.97), 0.02)
        _, report = fine_calibrate(dev, start)
        totals = [o["a"] + o["b"] + o["c"] for o in report.objective]
        assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))
        assert totals[-1] < totals[0]

    def test_even_repetitions_rejected(self):
        with pytest.raises(ValueError):
            fine_calibrate(planted_device(), CnotPulseParams(AMP_STAR), repetitions=(1, 2))


def phased_cnot(phase):
    return lambda p: np.diag([1, 1, np.exp(1j * phase), np.exp(1j * phase)]) @ CNOT


class TestFrameChange:
    def test_planted_phase(self):
        phi, p, _ = calibrate_frame_change(ModelBackend(unitary=phased_cnot(0.3)), CnotPulseParams(AMP_STAR))
        assert phi == pytest.approx(0.3, abs=2e-3)
        assert angle_diff(p.frame_change, -0.3) < 2e-3
        assert gate_fidelity(ModelBackend(unitary=phased_cnot(0.3)), p) == pytest.approx(1, abs=1e-9)

    def test_planted_phase_with_shots(self):
        phi, _, _ = calibrate_frame_change(ModelBackend(unitary=phased_cnot(0.3)), CnotPulseParams(AMP_STAR),
                                           shots=10**6, seed=3)
        assert phi == pytest.approx(0.3, abs=5e-3)

    @pytest.mark.parametrize("phase", [0.0, 1.0, 2.5, 4.0])
    def test_covariance(self, phase):
        phi, _, _ = calibrate_frame_change(ModelBackend(unitary=phased_cnot(phase)), CnotPulseParams(AMP_STAR))
        assert angle_diff(phi, phase) < 1e-9

    def test_off_equator_raises(self):
        tilt = np.kron(expm(-0.25j * oracles.Y), np.eye(2))
        dev = ModelBackend(unitary=lambda p: tilt @ CNOT)
        with pytest.raises(CalibrationError):
            calibrate_frame_change(dev, CnotPulseParams(AMP_STAR))


class TestFullPipeline:
    def test_planted_device_reaches_cnot(self):
        dev = planted_device(phi0=0.8, crosstalk=-0.7, phi1=1.1)
        p, reports = calibrate_cnot(dev, CnotPulseParams(AMP_STAR * 0.98), flats=FLATS, n_phases=12)
        assert [r.stage for r in reports] == ["cr_phase", "cancellation_rough", "fine", "frame_change"]
        assert gate_fidelity(dev, p) > 0.9999
        assert angle_diff(p.cr_phase, 0.8) < math.radians(1)

    @pytest.mark.slow
    def test_pulse_level_calibrated_gate(self, default_backend, calibrated_params):
        assert gate_fidelity(default_backend, calibrated_params) > 0.99
