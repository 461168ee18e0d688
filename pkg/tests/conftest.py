import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from remote_cr.calibration import CnotPulseParams, PulseBackend  # noqa: E402
from remote_cr.device import DeviceModel  # noqa: E402

# output of the staged calibration on the noiseless default device
CALIBRATED = CnotPulseParams(
    cr_amp=0.24486056574663198,
    cr_phase=2.531290191314798,
    duration=170.0,
    ramp_time=40.0,
    drag=-2.3853556240202534,
    cancel_amp=0.006304126221442947,
    cancel_phase=3.531280825349475,
    frame_change=1.3308040323474177,
)


@pytest.fixture(scope="session")
def default_model():
    return DeviceModel.default()


@pytest.fixture(scope="session")
def default_backend(default_model):
    return PulseBackend(default_model)


@pytest.fixture(scope="session")
def calibrated_params():
    return CALIBRATED


# acceptance criterion -> one-line verdict, printed at the end of the session
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=str):
            terminalreporter.write_line(ACCEPTANCE[key])
