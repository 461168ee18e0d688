"""Simulator of two superconducting qubits coupled through a multimode cable, driven by cross resonance."""

__version__ = "0.1.0"

from .benchmarking import (  # noqa: E402
    ExponentialDecay,
    TwoQubitDevice,
    bootstrap_stderr,
    chsh_scan,
    cnot_fidelity_from_xeb,
    fit_decay,
    prepare_bell_and_tomography,
    run_xeb,
    sample_xeb_circuit,
    xeb_fidelity,
)
from .calibration import CnotPulseParams, ModelBackend, PulseBackend, calibrate_cnot  # noqa: E402
from .config import RunConfig, load_config  # noqa: E402
from .device import CableMode, DeviceModel, PauliCoefficients, effective_pauli_coefficients  # noqa: E402
from .pulses import PulseSchedule, PulseSimulator, ReadoutModel, make_cr_envelope  # noqa: E402
from .tomography import (  # noqa: E402
    CRHamiltonianTomography,
    cr_parameter_sweep,
    fit_cr_hamiltonian,
    process_tomography,
    state_tomography,
)

__all__ = [
    "CableMode", "DeviceModel", "PauliCoefficients", "effective_pauli_coefficients",
    "PulseSchedule", "PulseSimulator", "ReadoutModel", "make_cr_envelope",
    "CRHamiltonianTomography", "cr_parameter_sweep", "fit_cr_hamiltonian", "process_tomography",
    "state_tomography", "CnotPulseParams", "ModelBackend", "PulseBackend", "calibrate_cnot",
    "ExponentialDecay", "TwoQubitDevice", "bootstrap_stderr", "chsh_scan", "cnot_fidelity_from_xeb",
    "fit_decay", "prepare_bell_and_tomography", "run_xeb", "sample_xeb_circuit", "xeb_fidelity",
    "RunConfig", "load_config",
]
