"""Experiment stages behind the command line: each writes its files and returns their names."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .benchmarking import (
    TwoQubitDevice,
    bell_state,
    bootstrap_stderr,
    chsh_scan,
    cnot_fidelity_from_xeb,
    prepare_bell_and_tomography,
    run_xeb,
)
from .calibration import CNOT, CalibrationError, CnotPulseParams, PulseBackend, calibrate_cnot, calibrate_cr_phase
from .config import RunConfig
from .device import COEFF_LABELS, TWO_PI
from .pulses import PulseSimulator, ReadoutModel, child_seed
from .quantum import apply_superop, chi_from_unitary, process_fidelity, project_chi
from .tomography import cr_parameter_sweep, process_tomography

__all__ = ["STAGES", "ORDER", "StageError", "run_stage", "write_csv", "write_json"]

PARAMS_FILE = "cnot_params.json"
ORDER = ("calibrate", "sweep", "qpt", "xeb", "bell", "chsh")


class StageError(RuntimeError):
    pass


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return repr(x) if math.isfinite(x) else "nan"


def write_csv(path: Path, header, rows, comment: str | None = None) -> None:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([v if isinstance(v, str) else _num(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_clean(data), indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _mhz(w):
    return np.asarray(w, dtype=float) / TWO_PI * 1e3


def _matrix_json(m):
    m = np.asarray(m)
    return {"real": m.real, "imag": m.imag}


class Context:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.model = cfg.model
        self._backend = None

    @property
    def backend(self) -> PulseBackend:
        if self._backend is None:
            self._backend = PulseBackend(self.model, self.cfg.dt, noise_on=True)
        return self._backend

    @property
    def readout(self) -> ReadoutModel:
        return ReadoutModel.from_device(self.model)

    def seed(self, stage: str) -> int:
        return child_seed(self.cfg.seed, ORDER.index(stage))

    def params(self) -> CnotPulseParams:
        path = self.out / PARAMS_FILE
        if not path.exists():
            raise StageError(f"{path} not found; run the calibrate stage first")
        return CnotPulseParams.from_json(path.read_text(encoding="utf-8"))


def stage_calibrate(ctx: Context):
    c = ctx.cfg.experiment["calibration"]
    params, reports = calibrate_cnot(ctx.backend, ctx.cfg.pulse, tuple(c["repetitions"]), shots=c["shots"],
                                     seed=ctx.seed("calibrate"), n_phases=int(c["n_phases"]),
                                     flats=ctx.cfg.grid("calibration", "flats_ns"))
    (ctx.out / PARAMS_FILE).write_text(params.to_json() + "\n", encoding="utf-8")
    write_json(ctx.out / "calibration_reports.json", [r.to_dict() for r in reports])
    return [PARAMS_FILE, "calibration_reports.json"]


def stage_sweep(ctx: Context):
    s = ctx.cfg.experiment["sweep"]
    try:
        phase = ctx.params().cr_phase
    except StageError:
        phase, _ = calibrate_cr_phase(ctx.backend, ctx.cfg.pulse, int(ctx.cfg.experiment["calibration"]["n_phases"]),
                                      ctx.cfg.grid("calibration", "flats_ns"))
    amps = ctx.cfg.grid("sweep", "amplitudes_mhz") * TWO_PI * 1e-3
    target = s["target_rate_mhz"]
    res = cr_parameter_sweep(ctx.backend.simulator, amps, phase, ctx.cfg.grid("sweep", "flats_ns"), s["shots"],
                             ctx.readout, ctx.cfg.experiment["readout_correction"], ctx.seed("sweep"),
                             ctx.cfg.pulse.ramp_time, None if target is None else TWO_PI * target * 1e-3,
                             noise_on=ctx.model.noisy)
    header = ["amplitude_mhz"] + [f"{c}_mhz" for c in COEFF_LABELS] + [f"{c}_err_mhz" for c in COEFF_LABELS]
    rows = [(_mhz(a), *_mhz(c), *_mhz(e)) for a, c, e in zip(res.amplitudes, res.coefficients, res.stderr)]
    write_csv(ctx.out / "sweep.csv", header, rows)
    write_csv(ctx.out / "fig2_cr_parameters.csv", header[:7], [r[:7] for r in rows],
              "fig2: effective CR rates versus drive amplitude, both in MHz")
    wp = None if res.working_point is None else float(_mhz(res.working_point))
    write_json(ctx.out / "sweep_summary.json", {"cr_phase": phase, "working_point_mhz": wp,
                                                "failed_rows": np.flatnonzero(~res.ok)})
    return ["sweep.csv", "fig2_cr_parameters.csv", "sweep_summary.json"]


def stage_qpt(ctx: Context):
    q = ctx.cfg.experiment["qpt"]
    s = ctx.backend.cnot_channel(ctx.params())
    raw = process_tomography(lambda rho: apply_superop(s, rho), q["shots"], ctx.readout,
                             ctx.cfg.experiment["readout_correction"], ctx.seed("qpt"), physical=False)
    chi = project_chi(raw)
    ideal = chi_from_unitary(CNOT)
    fid = process_fidelity(chi, ideal)
    min_eig = float(np.linalg.eigvalsh(0.5 * (raw + raw.conj().T)).min())
    write_json(ctx.out / "qpt_chi.json", {"raw": _matrix_json(raw), "projected": _matrix_json(chi),
                                          "ideal": _matrix_json(ideal)})
    write_json(ctx.out / "qpt_summary.json", {"process_fidelity": fid, "average_gate_fidelity": (4 * fid + 1) / 5,
                                              "raw_min_eigenvalue": min_eig,
                                              "severely_unphysical": min_eig < -0.1})
    rows = [(i, j, chi[i, j].real, chi[i, j].imag, ideal[i, j].real) for i in range(16) for j in range(16)]
    write_csv(ctx.out / "fig3a_chi.csv", ["row", "col", "chi_real", "chi_imag", "ideal_real"], rows,
              "fig3a: CNOT process matrix in the Pauli basis, row-major")
    return ["qpt_chi.json", "qpt_summary.json", "fig3a_chi.csv"]


def _device(ctx: Context, layer_time: float = 0.0) -> TwoQubitDevice:
    return TwoQubitDevice.from_model(ctx.backend.cnot_channel(ctx.params()), ctx.model, layer_time)


def stage_xeb(ctx: Context):
    x = ctx.cfg.experiment["xeb"]
    dev = _device(ctx, float(x["layer_time_ns"]))
    seed = ctx.seed("xeb")
    kw = dict(depths=x["depths"], n_circuits=int(x["circuits"]), shots=x["shots"], seed=seed)
    ref = run_xeb(dev, interleave=False, **kw)
    inter = run_xeb(dev, interleave=True, **kw)
    f = cnot_fidelity_from_xeb(ref.p, inter.p)
    n_boot = int(x["bootstrap_resamples"])
    err = bootstrap_stderr(ref, inter, n_boot, child_seed(seed, 99))
    files = []
    for name, r in (("xeb_reference.csv", ref), ("xeb_interleaved.csv", inter)):
        write_csv(ctx.out / name, ["depth", "circuit_index", "fidelity"], r.table())
        files.append(name)
    write_json(ctx.out / "xeb_summary.json", {
        "p_ref": ref.p, "p_int": inter.p, "p_ref_stderr": ref.p_stderr, "p_int_stderr": inter.p_stderr,
        "F_CNOT": f, "stderr": err, "resamples": n_boot, "seed": seed,
        "ordering_ok": inter.p <= ref.p + 2 * math.hypot(ref.p_stderr, inter.p_stderr),
    })
    rows = []
    for series, r in (("reference", ref), ("interleaved", inter)):
        for m, fm in zip(r.depths, r.fidelity):
            rows.append((series, int(m), fm, r.A * r.p ** m))
    write_csv(ctx.out / "fig3b_xeb.csv", ["series", "depth", "fidelity", "fit"], rows,
              "fig3b: XEB fidelity versus depth for reference and interleaved circuits")
    return files + ["xeb_summary.json", "fig3b_xeb.csv"]


def stage_bell(ctx: Context):
    b = ctx.cfg.experiment["bell"]
    rho, fid = prepare_bell_and_tomography(_device(ctx), b["shots"], ctx.seed("bell"),
                                           ctx.cfg.experiment["readout_correction"])
    write_json(ctx.out / "bell_state.json", {"rho": _matrix_json(rho), "fidelity": fid})
    labels = ["00", "01", "10", "11"]
    ideal = bell_state()
    rows = [(labels[i], labels[j], rho[i, j].real, rho[i, j].imag, ideal[i, j].real)
            for i in range(4) for j in range(4)]
    write_csv(ctx.out / "fig4a_bell.csv", ["row", "col", "rho_real", "rho_imag", "ideal_real"], rows,
              f"fig4a: reconstructed Bell-state density matrix, fidelity {fid:.6f}")
    return ["bell_state.json", "fig4a_bell.csv"]


def stage_chsh(ctx: Context):
    c = ctx.cfg.experiment["chsh"]
    res = chsh_scan(_device(ctx), ctx.cfg.grid("chsh", "thetas"), c["shots"], ctx.seed("chsh"))
    header = ["theta", "S_raw", "S_corrected", "stderr_raw", "stderr_corrected"]
    rows = list(zip(res.theta, res.s_raw, res.s_corrected, res.stderr_raw, res.stderr_corrected))
    write_csv(ctx.out / "chsh.csv", header, rows)
    refs = [("classical", 2.0), ("classical", -2.0), ("quantum", 2 * math.sqrt(2)), ("quantum", -2 * math.sqrt(2))]
    fig = [("measured", *r) for r in rows] + [(name, "", v, v, 0.0, 0.0) for name, v in refs]
    write_csv(ctx.out / "fig4b_chsh.csv", ["series"] + header, fig,
              f"fig4b: CHSH correlation versus target angle; max raw {res.max_raw:.4f}, "
              f"max corrected {res.max_corrected:.4f}")
    write_json(ctx.out / "chsh_summary.json", {"max_raw": res.max_raw, "max_corrected": res.max_corrected})
    return ["chsh.csv", "fig4b_chsh.csv", "chsh_summary.json"]


STAGES = {
    "calibrate": stage_calibrate,
    "sweep": stage_sweep,
    "qpt": stage_qpt,
    "xeb": stage_xeb,
    "bell": stage_bell,
    "chsh": stage_chsh,
}


def run_stage(name: str, ctx: Context):
    try:
        return STAGES[name](ctx)
    except (StageError, CalibrationError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(f"{name}: {exc}") from exc
