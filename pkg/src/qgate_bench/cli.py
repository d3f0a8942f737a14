"""Command-line runner: calibration, RB campaigns, parameter sweeps and fidelity histograms.

    qgate-bench <calibrate|rb|sweep|histogram> --config <path> [--seed N] [--out DIR]
                [--backend full|simple] [--plot]

Every command writes CSV for tabular data, JSON for fits and a
``manifest_<command>.json`` listing every file it produced.  Payloads
contain no timestamps, so re-running with the same config and seed gives
byte-identical CSV and JSON; only the manifest records wall time.

Exit codes: 0 success, 1 numerical or fit failure, 2 config or usage error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .backends import SimpleModelBackend, TableBackend
from .calibration import (CZCalibration, calibrate_cz, calibrate_iswap, calibrated_channel, calibration_from_dict,
                          cz_cycle_time, measure_chevron, measure_static_zz, sq_phases_from_channel)
from .config import ExperimentConfig, load_config
from .device import load_device
from .errors import (ConfigError, FluxOutOfRange, InsufficientData, InvalidNoise, NegativeSigma, QGateError)
from .gates import CZ, ISWAP, SimpleNoiseModel, u_cz, u_iswap
from .noise import AmplitudeDephasingModel, JitterHook, PhaseJitterModel, with_drive_dephasing
from .pulse_backends import EffectiveBackend, FullModelBackend, corrected
from .qmath import qpt_infidelity
from .rb import histogram_from_fidelities, run_purity_rb, run_rb, run_sequences

EXIT_OK, EXIT_NUMERICAL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (ConfigError, InsufficientData, InvalidNoise, NegativeSigma, FluxOutOfRange)
MIN_HISTOGRAM_RANDOM = 20
COMMANDS = ("calibrate", "rb", "sweep", "histogram")
SWEEP_UNITS = {"gate_length": "ns", "detuning": "kHz", "drive_phase": "rad", "sideband": "MHz"}


# -- output handling ----------------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class RunWriter:
    """Writes the outputs of one command into ``out_dir`` and keeps the manifest list."""

    def __init__(self, out_dir, command: str, plot: bool = False):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.plot = plot
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        fname = f"{self.command}_{name}"
        if fname not in self.files:
            self.files.append(fname)
        return self.out_dir / fname

    def json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"
        _atomic_write(p, text)
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self.path(name)
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return p

    def figure(self, name: str, fn, *args, **kw) -> Path | None:
        if not self.plot:
            return None
        p = self.path(name)
        fn(*args, path=p, **kw)
        return p

    def manifest(self, config_hash: str | None, wall_time: float, exit_code: int) -> Path:
        entries = []
        for fname in self.files:
            p = self.out_dir / fname
            if p.exists():
                entries.append({"path": fname, "bytes": p.stat().st_size,
                                "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        body = {
            "command": self.command,
            "config_hash": config_hash,
            "tool_version": __version__,
            "wall_time_s": wall_time,
            "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "exit_code": exit_code,
            "outputs": entries,
        }
        p = self.out_dir / f"manifest_{self.command}.json"
        _atomic_write(p, json.dumps(_clean(body), indent=2, sort_keys=True) + "\n")
        return p


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else "nan"
    return v


# -- model construction ---------------------------------------------------------------------


def _kind(gate: str):
    return CZ(math.pi) if gate == "cz" else ISWAP(math.pi, 0.0)


def simple_noise(cfg: ExperimentConfig) -> SimpleNoiseModel:
    s = cfg.simple

    def pair(v):
        return tuple(math.inf if x is None else float(x) * 1e-6 for x in v)

    return SimpleNoiseModel(t1=pair(s.t1_us), t2_star=pair(s.t2_star_us), zeta=s.zeta_khz * 1e3,
                            tau_2q=s.gate_length_ns * 1e-9, tau_1q=s.single_qubit_ns * 1e-9)


def _dephasing_model(cfg: ExperimentConfig) -> AmplitudeDephasingModel | None:
    d = cfg.noise.drive_dephasing
    if not d.enabled:
        return None
    kw = {}
    if d.c0_hz is not None:
        kw["c0"] = d.c0_hz
    if d.c2_per_hz is not None:
        kw["c2"] = d.c2_per_hz
    return AmplitudeDephasingModel(**kw)


def _gate_rabi(gate: str, tau: float) -> float:
    # an iSWAP is half a Rabi cycle, a resonant CZ a full one
    return 1 / (2 * tau) if gate == "iswap" else 1 / tau


def simple_rb_noise(cfg: ExperimentConfig, tau_2q: float | None = None) -> SimpleNoiseModel:
    noise = simple_noise(cfg)
    if tau_2q is not None:
        noise = noise.with_(tau_2q=tau_2q)
    dep = _dephasing_model(cfg)
    if dep is not None:
        noise = with_drive_dephasing(noise, dep, _gate_rabi(cfg.gate, noise.tau_2q))
    return noise


def jitter_hook(cfg: ExperimentConfig, sideband_hz: float | None = None) -> JitterHook | None:
    j = cfg.noise.jitter
    f = j.sideband_mhz * 1e6 if sideband_hz is None else sideband_hz
    if f == 0:
        return None
    return JitterHook(PhaseJitterModel(sideband_frequency=f, max_cycles=j.max_cycles, per_gate=j.per_gate))


def pulse_backend(cfg: ExperimentConfig):
    """Pulse-level backend: the analytic two-level model for ``simple``, the device model for ``full``."""
    flank = cfg.pulse.flank_ns * 1e-9
    if cfg.backend == "simple":
        return EffectiveBackend(noise=simple_noise(cfg), flank=flank, decoherence=cfg.pulse.decoherence)
    return FullModelBackend(load_device(cfg.device_path()), flank=flank, decoherence=cfg.pulse.decoherence)


def gate_amplitude(cfg: ExperimentConfig, backend) -> float:
    if cfg.pulse.amplitude is not None:
        return float(cfg.pulse.amplitude)
    if isinstance(backend, EffectiveBackend):
        # match the configured gate length at resonance
        rabi = _gate_rabi(cfg.gate, cfg.simple.gate_length_ns * 1e-9)
        return rabi / backend.rabi(cfg.gate, 1.0)
    raise ConfigError("pulse.amplitude is required for the full backend")


def run_calibration(cfg: ExperimentConfig, backend):
    amplitude = gate_amplitude(cfg, backend)
    chevron = measure_chevron(backend, cfg.gate, amplitude)
    if cfg.gate == "cz":
        cal = calibrate_cz(backend, amplitude, n_points=cfg.pulse.n_points, phase_tol=cfg.pulse.phase_tol,
                           max_iter=8, chevron=chevron)
    else:
        cal = calibrate_iswap(backend, amplitude, n_points=cfg.pulse.n_points, chevron=chevron)
    return cal, chevron


def load_or_calibrate(cfg: ExperimentConfig, backend):
    if cfg.calibration_report:
        p = cfg.resolve(cfg.calibration_report)
        if not p.is_file():
            raise ConfigError(f"calibration report not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        if data.get("gate", cfg.gate) != cfg.gate:
            raise ConfigError(f"calibration report is for {data.get('gate')}, config asks for {cfg.gate}")
        return calibration_from_dict(data)
    cal, _ = run_calibration(cfg, backend)
    return cal


def _pulse_channel(backend, pulse, corrections, decoherence: bool):
    if isinstance(backend, FullModelBackend) and decoherence:
        return backend.channels([pulse], decoherence=True, corrections=[corrections])[0]
    return corrected(backend.channels([pulse], decoherence=decoherence)[0], corrections)


def _ideal_unitaries(cal) -> dict:
    if isinstance(cal, CZCalibration):
        return {"ideal": u_cz(math.pi)}
    z = cal.phase_zz
    # ZZ phase split evenly between the single-excitation states
    balanced = np.diag([1, np.exp(0.5j * z), np.exp(0.5j * z), 1]) @ u_iswap(math.pi, 0.0)
    return {"ideal": u_iswap(math.pi, 0.0), "zz_balanced": balanced}


def _check_rb_section(cfg: ExperimentConfig) -> None:
    if cfg.rb.n_random < 1:
        raise InsufficientData("rb.n_random must be at least 1")
    if len(cfg.rb.lengths) < 3:
        raise InsufficientData("rb.lengths needs at least three sequence lengths")


def rb_backend(cfg: ExperimentConfig, hook=None, tau_2q: float | None = None):
    """Gate-channel backend for RB plus a description of what it contains."""
    if cfg.backend == "simple":
        noise = simple_rb_noise(cfg, tau_2q)
        context = {"model": "simple", "noise": dataclasses.asdict(noise)}
        return SimpleModelBackend(noise, sequence_hook=hook), context
    if cfg.noise.drive_dephasing.enabled:
        raise ConfigError("noise.drive_dephasing applies to the simple backend only")
    pb = pulse_backend(cfg)
    cal = load_or_calibrate(cfg, pb)
    channel = calibrated_channel(pb, cal, decoherence=cfg.pulse.decoherence)
    return TableBackend({_kind(cfg.gate): channel}, sequence_hook=hook), {
        "model": "full", "calibration": cal.to_dict(), "leakage": pb.last_leakage}


def _run_rb(cfg: ExperimentConfig, backend):
    return run_rb(backend, cfg.rb.lengths, cfg.rb.n_random, interleave=_kind(cfg.gate), rng_seed=cfg.seed,
                  native=cfg.gate, shots=cfg.rb.shots)


def _rb_rows(lengths, data, label):
    for i, m in enumerate(lengths):
        row = data[i]
        yield [label, m, float(row.mean()), float(row.std(ddof=1)) if len(row) > 1 else 0.0, *map(float, row)]


def _write_rb_csv(writer: RunWriter, lengths, reference, interleaved=None):
    n = reference.shape[1]
    rows = list(_rb_rows(lengths, reference, "reference"))
    if interleaved is not None:
        rows += list(_rb_rows(lengths, interleaved, "interleaved"))
    writer.csv("decay.csv", ["sequence", "m", "mean", "std", *[f"r{i}" for i in range(n)]], rows)


# -- commands ---------------------------------------------------------------------------------


def cmd_calibrate(cfg: ExperimentConfig, writer: RunWriter) -> dict:
    from . import plotting

    backend = pulse_backend(cfg)
    cal, chevron = run_calibration(cfg, backend)
    chevron.write_csv(writer.path("chevron.csv"))
    writer.figure("chevron.svg", plotting.plot_chevron, chevron)
    channel = calibrated_channel(backend, cal, decoherence=cfg.pulse.decoherence)
    coherent = calibrated_channel(backend, cal, decoherence=False)
    process = {}
    for label, u in _ideal_unitaries(cal).items():
        process[f"qpt_infidelity_{label}"] = qpt_infidelity(channel, u)
        process[f"coherent_infidelity_{label}"] = qpt_infidelity(coherent, u)
    zz = measure_static_zz(backend)
    if isinstance(cal, CZCalibration):
        writer.csv("phase_scan.csv", ["detuning_hz", "gate_length_s", "controlled_phase_rad"], cal.phase_scan)
        writer.figure("phase_scan.svg", plotting.plot_phase_scan, cal.phase_scan, cal.geometric_fit)
    payload = {
        "command": "calibrate",
        "gate": cfg.gate,
        "backend": cfg.backend,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "gate_length_ns": cal.gate_length * 1e9,
        "calibration": cal.to_dict(),
        "process": process,
        "static_zz": zz.to_dict(),
        "leakage": getattr(backend, "last_leakage", 0.0),
    }
    writer.json("report.json", payload)
    return payload


def cmd_rb(cfg: ExperimentConfig, writer: RunWriter) -> dict:
    from . import plotting

    _check_rb_section(cfg)
    hook = jitter_hook(cfg)
    backend, context = rb_backend(cfg, hook)
    try:
        result = _run_rb(cfg, backend)
    except QGateError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            _write_rb_csv(writer, partial["lengths"], partial["reference"], partial["interleaved"])
        raise
    if hook is not None:
        result.jitter_log = list(hook.log)
    _write_rb_csv(writer, result.lengths, result.fidelities, result.interleaved_fidelities)
    purity = None
    if cfg.rb.purity:
        purity = run_purity_rb(backend, cfg.rb.lengths, cfg.rb.n_random, rng_seed=cfg.seed, native=cfg.gate)
        writer.csv("purity.csv", ["m", "mean", "std", *[f"r{i}" for i in range(cfg.rb.n_random)]],
                   [r[1:] for r in _rb_rows(purity.lengths, purity.purities, "purity")])
    payload = {
        "command": "rb",
        "gate": cfg.gate,
        "backend": cfg.backend,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "epg": result.epg,
        "epg_err": result.epg_err,
        "epc": result.epc,
        "result": result.to_dict(),
        "purity": purity.to_dict() if purity is not None else None,
        "jitter": list(hook.log) if hook is not None else [],
        "context": context,
    }
    writer.json("result.json", payload)
    writer.figure("decay.svg", plotting.plot_rb, result, purity=purity)
    return payload


def cmd_histogram(cfg: ExperimentConfig, writer: RunWriter) -> dict:
    from . import plotting

    n = cfg.rb.n_random
    if n < MIN_HISTOGRAM_RANDOM:
        raise InsufficientData(f"histograms need at least {MIN_HISTOGRAM_RANDOM} randomizations, got {n}")
    lengths = [int(m) for m in cfg.histogram.lengths]
    hook = jitter_hook(cfg)
    backend, context = rb_backend(cfg, hook)
    interleave = _kind(cfg.gate) if cfg.histogram.interleaved else None
    data = run_sequences(backend, lengths, n, cfg.gate, interleave, rng_seed=cfg.seed, shots=cfg.rb.shots)
    hists = [histogram_from_fidelities(lengths, data, m, cfg.histogram.bins, MIN_HISTOGRAM_RANDOM)
             for m in lengths]
    writer.csv("sequences.csv", ["m", "randomization", "fidelity"],
               [[m, r, float(data[i, r])] for i, m in enumerate(lengths) for r in range(n)])
    writer.csv("counts.csv", ["m", "bin_low", "bin_high", "count"],
               [[h.m, float(h.edges[k]), float(h.edges[k + 1]), int(h.counts[k])]
                for h in hists for k in range(len(h.counts))])
    stds = [h.std for h in hists]
    payload = {
        "command": "histogram",
        "gate": cfg.gate,
        "backend": cfg.backend,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "interleaved": cfg.histogram.interleaved,
        "n_random": n,
        "histograms": [h.to_dict() for h in hists],
        "std_ratio_last_first": stds[-1] / stds[0] if stds[0] > 0 else None,
        "jitter": list(hook.log) if hook is not None else [],
        "context": context,
    }
    writer.json("fits.json", payload)
    writer.figure("histograms.svg", plotting.plot_histograms, hists)
    return payload


def _sweep_point_rb(cfg, backend) -> dict:
    res = _run_rb(cfg, backend)
    return {"epg": res.epg, "epg_err": res.epg_err, "epc": res.epc, "p_reference": res.fit.p,
            "p_interleaved": res.interleaved_fit.p}


def _sweep_points(cfg: ExperimentConfig):
    """Yield (value, callable returning the point's result dict) for the configured sweep."""
    sw = cfg.sweep
    param = sw.parameter
    if param == "gate_length" and cfg.backend == "full":
        if not sw.amplitudes:
            raise ConfigError("a full-backend gate_length sweep needs sweep.amplitudes")

        def at_amplitude(a):
            sub = cfg.with_(pulse=dataclasses.replace(cfg.pulse, amplitude=float(a)), calibration_report=None)
            backend, context = rb_backend(sub)
            out = _sweep_point_rb(sub, backend)
            out["gate_length_ns"] = context["calibration"]["gate_length"] * 1e9
            out["amplitude"] = float(a)
            return out

        return [(float(a), (lambda a=a: at_amplitude(a))) for a in sw.amplitudes], {}
    if not sw.values:
        raise ConfigError(f"sweep.values is empty for parameter {param!r}")
    values = [float(v) for v in sw.values]
    if param == "gate_length":
        def at_length(v):
            backend, _ = rb_backend(cfg, jitter_hook(cfg), tau_2q=v * 1e-9)
            out = _sweep_point_rb(cfg, backend)
            out["gate_length_ns"] = v
            return out

        return [(v, (lambda v=v: at_length(v))) for v in values], {}
    if param == "sideband":
        if cfg.backend == "simple":
            tau_ns = cfg.simple.gate_length_ns

            def base(hook):
                return rb_backend(cfg, hook)[0]
        else:
            table, context = rb_backend(cfg)
            channel = table.channel(_kind(cfg.gate))
            tau_ns = context["calibration"]["gate_length"] * 1e9

            def base(hook):
                return TableBackend({_kind(cfg.gate): channel}, sequence_hook=hook)

        def at_sideband(v):
            hook = jitter_hook(cfg, sideband_hz=v * 1e6)
            backend = base(hook)
            out = _sweep_point_rb(cfg, backend)
            out["gate_length_ns"] = tau_ns
            if hook is not None:
                out["mean_jitter_rad"] = float(np.mean(hook.log)) if hook.log else 0.0
            return out

        return [(v, (lambda v=v: at_sideband(v))) for v in values], {}
    # detuning and drive phase: re-simulate the pulse around one calibration
    if cfg.backend == "simple" and cfg.noise.drive_dephasing.enabled:
        raise ConfigError("noise.drive_dephasing is not used by pulse-level sweeps")
    pb = pulse_backend(cfg)
    cal = load_or_calibrate(cfg, pb)
    sign = getattr(pb, "detuning_sign", 1.0)
    deco = cfg.pulse.decoherence
    meta = {"calibration": cal.to_dict()}

    def point_for(pulse, corrections):
        channel = _pulse_channel(pb, pulse, corrections, deco)
        backend = TableBackend({_kind(cfg.gate): channel}, sequence_hook=jitter_hook(cfg))
        out = _sweep_point_rb(cfg, backend)
        out["gate_length_ns"] = pulse.duration * 1e9
        return out

    if param == "detuning":
        def at_detuning(v):
            delta = v * 1e3
            if isinstance(cal, CZCalibration):
                offset = cal.gate_length - float(cz_cycle_time(cal.detuning, cal.rabi, cal.zeta))
                tau = float(cz_cycle_time(delta, cal.rabi, cal.zeta)) + offset
                pulse = pb.make_pulse("cz", cal.amplitude, cal.resonance_frequency + sign * delta, tau)
                raw = pb.channels([pulse], decoherence=False)[0]
                corrections, _ = sq_phases_from_channel(raw, cfg.pulse.n_points)
            else:
                pulse = pb.make_pulse("iswap", cal.amplitude, cal.drive_frequency + delta, cal.gate_length,
                                      phase=cal.drive_phase)
                corrections = cal.corrections
            return point_for(pulse, corrections)

        return [(v, (lambda v=v: at_detuning(v))) for v in values], meta

    def at_phase(v):
        pulse = pb.make_pulse(cfg.gate, cal.amplitude, cal.drive_frequency, cal.gate_length, phase=v)
        return point_for(pulse, cal.corrections)

    if not isinstance(cal, CZCalibration):
        meta["calibrated_drive_phase"] = cal.drive_phase
    return [(v, (lambda v=v: at_phase(v))) for v in values], meta


def cmd_sweep(cfg: ExperimentConfig, writer: RunWriter) -> dict:
    from . import plotting

    _check_rb_section(cfg)
    param = cfg.sweep.parameter
    points, meta = _sweep_points(cfg)
    rows = []
    for value, run in points:
        try:
            out = run()
            out["status"] = "ok"
        except QGateError as exc:
            out = {"status": f"failed: {type(exc).__name__}: {exc}", "epg": math.nan}
        out["value"] = value
        rows.append(out)
    cols = ["value", "epg", "epg_err", "epc", "gate_length_ns", "status"]
    first = "setpoint_ns" if param == "gate_length" else f"{param}_{SWEEP_UNITS[param]}"
    writer.csv("points.csv", [first, *cols[1:]],
               [[r.get(c, math.nan) for c in cols] for r in rows])
    ok = [r for r in rows if r["status"] == "ok" and math.isfinite(r["epg"])]
    best = min(ok, key=lambda r: r["epg"])["value"] if ok else None
    payload = {
        "command": "sweep",
        "parameter": param,
        "unit": SWEEP_UNITS[param],
        "gate": cfg.gate,
        "backend": cfg.backend,
        "seed": cfg.seed,
        "config_hash": cfg.hash(),
        "points": rows,
        "argmin_epg": best,
        "n_failed": len(rows) - len(ok),
        **meta,
    }
    writer.json("result.json", payload)
    x = [r["gate_length_ns"] if param == "gate_length" else r["value"] for r in rows]
    writer.figure("epg.svg", plotting.plot_sweep, param, SWEEP_UNITS[param], x, [r["epg"] for r in rows])
    return payload


COMMAND_FUNCS = {"calibrate": cmd_calibrate, "rb": cmd_rb, "sweep": cmd_sweep, "histogram": cmd_histogram}


# -- entry point --------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qgate-bench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True,
                        help="experiment config (JSON) or preset:<name> for a bundled preset")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory (default: config 'output')")
    parser.add_argument("--backend", choices=("full", "simple"), default=None, help="override the config backend")
    parser.add_argument("--plot", action="store_true", help="also write SVG figures")
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, CONFIG_ERRORS):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def _error_payload(exc: BaseException, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def run_command(command: str, cfg: ExperimentConfig, out_dir, plot: bool = False) -> tuple[int, dict]:
    """Run one command; returns (exit code, payload or error payload)."""
    writer = RunWriter(out_dir, command, plot)
    t0 = time.perf_counter()
    try:
        payload = COMMAND_FUNCS[command](cfg, writer)
        code = EXIT_OK
    except (QGateError, ArithmeticError, np.linalg.LinAlgError) as exc:
        code = exit_code_for(exc)
        payload = _error_payload(exc, code)
        writer.json("error.json", payload)
    writer.manifest(cfg.hash(), time.perf_counter() - t0, code)
    return code, payload


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        if args.backend is not None:
            cfg = cfg.with_(backend=args.backend)
    except QGateError as exc:
        code = exit_code_for(exc)
        print(json.dumps(_error_payload(exc, code)), file=sys.stderr)
        if args.out:
            writer = RunWriter(args.out, args.command)
            writer.json("error.json", _error_payload(exc, code))
            writer.manifest(None, 0.0, code)
        return code
    out = Path(args.out) if args.out else Path(cfg.output)
    code, payload = run_command(args.command, cfg, out, args.plot)
    if code != EXIT_OK:
        print(json.dumps(payload), file=sys.stderr)
    else:
        print(f"qgate-bench {args.command}: wrote {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
