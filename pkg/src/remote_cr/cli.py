"""Command line: ``remote-cr <subcommand> --config run.yaml [--set key=value ...]``.

Exit status is 0 on success, 2 for usage or configuration errors and 3
when a stage fails. Finished outputs stay on disk and ``manifest.json``
records which stage failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import CONFIG_ENV, ConfigError, load_config
from .pipeline import ORDER, Context, StageError, run_stage, write_json

EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3
MANIFEST = "manifest.json"
log = logging.getLogger("remote_cr")


def _now() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch else _dt.datetime.now(_dt.timezone.utc)
    return t.isoformat(timespec="seconds")


def _load_manifest(path: Path, cfg_hash: str, seed: int) -> dict:
    if path.exists():
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            if data.get("config_hash") == cfg_hash:
                return data
        except json.JSONDecodeError:
            pass
    return {"config_hash": cfg_hash, "artifact_version": __version__, "seed": seed, "stages": {}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="remote-cr", description="Simulated cable-coupled CR CNOT experiments.")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")
    helps = {
        "sweep": "CR rates versus drive amplitude",
        "calibrate": "staged CNOT calibration, writes cnot_params.json",
        "qpt": "process tomography of the calibrated CNOT",
        "xeb": "reference and interleaved XEB",
        "bell": "Bell-state preparation and state tomography",
        "chsh": "CHSH angle scan",
        "all": "calibrate then every other stage",
    }
    for name, text in helps.items():
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", "-c", help=f"YAML config (default: ${CONFIG_ENV})")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key by dot path, e.g. experiment.xeb.shots=500")
        s.add_argument("--output-dir", "-o", help="directory for results (overrides output_dir)")
        s.add_argument("--verbose", "-v", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config, args.overrides, args.output_dir)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    ctx = Context(cfg)
    mpath = cfg.output_dir / MANIFEST
    manifest = _load_manifest(mpath, cfg.hash, cfg.seed)
    stages = ORDER if args.command == "all" else (args.command,)
    status = EXIT_OK
    for name in stages:
        entry = {"status": "running", "started": _now(), "outputs": []}
        manifest["stages"][name] = entry
        log.info("stage %s", name)
        try:
            entry["outputs"] = run_stage(name, ctx)
            entry["status"] = "ok"
        except StageError as exc:
            entry["status"] = "failed"
            entry["error"] = str(exc)
            print(f"stage failed: {exc}", file=sys.stderr)
            status = EXIT_STAGE
        entry["finished"] = _now()
        write_json(mpath, manifest)
        if status:
            break
    return status


if __name__ == "__main__":
    sys.exit(main())
