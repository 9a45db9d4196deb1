"""Command-line front end.

Every command writes a JSON manifest next to its main output
(``<out>.manifest.json``, or ``<out>/manifest.json`` for directories), on
success and on failure. Exit codes: 0 ok, 2 validation, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numba
import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config
from .correlator import (DEFAULT_WINDOW, build_histogram, g_lower_order_slices, g_zero,
                         gated_g2_scan, integrate_peaks)
from .errors import DataError, NumericalError, PhotonStatsError, ValidationError
from .hom import (HomReport, correct_visibility, emission_pairs, expected_visibility,
                  overlap_from_emission_times, visibility_from_counts)
from .photon_number import MomentSet, estimate_eta, extract
from .pipeline import BIN_WIDTH, PERIODS, photon_numbers
from .sim import (EmissionRecords, detect, photon_number_histogram, reference_emissions,
                  simulate_emissions)
from .timetag import DEFAULT_T_STOP, read_stream, write_stream

HIST_HEADERS = {2: ["tau_ps", "counts"], 3: ["tau1_ps", "tau2_ps", "counts"],
                4: ["k1", "k2", "k3", "counts"]}
PN_HEADER = ["theta", "p0", "p1", "pi2", "pi3", "pi4"]
GATE_HEADER = ["t_start", "rate", "g2", "sigma"]
HOM_HEADER = ["theta_over_pi", "V_raw", "g2", "M", "V_gated", "count_rate"]


class Run:
    """Collects what the manifest records while a command executes."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.config: dict = {}
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.notes: dict = {}
        self.seed: int | None = getattr(args, "seed", None)
        self.t0 = time.perf_counter()

    def output(self, path) -> Path:
        path = Path(path)
        self.outputs.append(str(path))
        return path

    def manifest(self, status: str, code: int, error: str | None) -> dict:
        opts = {k: v for k, v in vars(self.args).items() if k not in ("func",)}
        return {
            "command": self.command,
            "version": __version__,
            "status": status,
            "exit_code": code,
            "error": error,
            "seed": self.seed,
            "config": self.config,
            "options": opts,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "notes": self.notes,
            "wall_clock_s": time.perf_counter() - self.t0,
        }


def _manifest_path(out) -> Path | None:
    if out is None:
        return None
    out = Path(out)
    if out.is_dir() or str(out).endswith(("/", "\\")):
        return out / "manifest.json"
    return out.with_name(out.name + ".manifest.json")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.ndarray, tuple)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(type(o).__name__)


def write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_rows(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return repr(float(x))


def _read_input(path: str, run: Run):
    run.inputs.append(path)
    try:
        return read_stream(path)
    except FileNotFoundError as exc:
        raise DataError(f"input not found: {path}") from exc


def _int_list(text: str, what: str) -> list[int]:
    try:
        if ":" in text:
            a, b, s = (int(x) for x in text.split(":"))
            if s <= 0:
                raise ValueError
            return list(range(a, b + 1, s))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"{what}: expected comma list or start:stop:step, got {text!r}") from exc


def _run_config(args, run: Run) -> RunConfig:
    overrides = {} if args.seed is None else {"seed": args.seed}
    if args.config is None:
        rc = parse_config({}, overrides)
    else:
        run.inputs.append(args.config)
        try:
            run.config = {"path": args.config, "text": Path(args.config).read_text()}
        except OSError:
            pass
        rc = load_config(args.config, overrides)
    run.config = {**run.config, "resolved": rc.raw}
    run.seed = rc.raw["seed"]
    return rc


# -- simulate -----------------------------------------------------------------

def _point_name(theta: float) -> str:
    return f"theta_{theta:07.3f}pi"


def _save_emissions(path: Path, records: EmissionRecords, theta: float | None) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, counts=records.counts, times=records.times,
                 lifetime=np.float64(records.lifetime),
                 theta_over_pi=np.float64(np.nan if theta is None else theta))


def _simulate_point(rc: RunConfig, i: int, out: Path, run: Run, emissions: bool) -> None:
    raw = rc.raw
    if rc.source == "tls":
        emitter = rc.emitters[i]
        records = simulate_emissions(emitter)
        theta = rc.thetas[i]
    else:
        records = reference_emissions(rc.source, raw["source_param"], raw["n_pulses"],
                                      raw["seed"], raw["lifetime_ps"])
        theta = None
    stream = detect(records, rc.detection, raw["repetition_period_ps"], raw["seed"])
    write_stream(stream, run.output(out))
    truth = photon_number_histogram(records)
    meta = {"theta_over_pi": theta, "source": rc.source, "n_pulses": raw["n_pulses"],
            "n_tags": int(stream.times.size), "truth_p": list(truth.p),
            "truth_truncated": truth.truncated, "eta_t": raw["eta_t"]}
    write_json(run.output(out.with_name(out.name + ".meta.json")), meta)
    if emissions:
        _save_emissions(run.output(out.with_name(out.name + ".emissions.npz")), records, theta)


def cmd_simulate(args, run: Run) -> None:
    rc = _run_config(args, run)
    out = Path(args.out)
    if rc.is_sweep and rc.source == "tls":
        out.mkdir(parents=True, exist_ok=True)
        for i, th in enumerate(rc.thetas):
            _simulate_point(rc, i, out / f"{_point_name(th)}.ptag", run, args.emissions)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        _simulate_point(rc, 0, out, run, args.emissions)


# -- correlate ----------------------------------------------------------------

def _hist_rows(h):
    K = h.half_bins
    bw = h.bin_width
    if h.order == 2:
        counts = h.to_dense()
        return ([(k - K) * bw, int(c)] for k, c in enumerate(counts))
    idx, vals = h.nonzero()
    return ([int(i) * bw, int(j) * bw, int(v)] for (i, j), v in zip(idx, vals))


def cmd_correlate(args, run: Run) -> None:
    stream = _read_input(args.input, run)
    m = args.order
    channels = tuple(_int_list(args.channels, "channels")) if args.channels else tuple(range(1, m + 1))
    if len(channels) != m:
        raise ValidationError(f"channels: order {m} needs {m} channels, got {len(channels)}")
    bw = args.bin_width or BIN_WIDTH[m]
    max_delay = args.max_delay or PERIODS[m] * stream.clock_period
    h = build_histogram(stream, m, bw, max_delay, channels)
    peaks = integrate_peaks(h, args.window)
    est = g_zero(h, args.window, peaks)
    report = {"order": m, "channels": list(channels), "bin_width": bw, "max_delay": max_delay,
              "window": args.window, "n_periods": h.n_periods, "g_zero": est.to_dict()}
    if m >= 3:
        report["slices"] = {k: v.to_dict() for k, v in g_lower_order_slices(h, args.window, peaks).items()}
    out = Path(args.out)
    csv_path = run.output(out.with_suffix(".csv"))
    if m == 4:
        rows = ([*lat, n] for lat, n in sorted(peaks.items()))
    else:
        rows = _hist_rows(h)
    write_rows(csv_path, HIST_HEADERS[m], rows)
    write_json(run.output(out.with_suffix(".json")), report)


# -- extract-pn ---------------------------------------------------------------

def _eta_from_file(path: str, run: Run) -> float:
    run.inputs.append(path)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"--eta-from: cannot read {path}: {exc}") from exc
    for key in ("eta_estimate", "eta"):
        if isinstance(data.get(key), (int, float)):
            return float(data[key])
    raise ValidationError(f"--eta-from: {path} has no eta_estimate or eta field")


def _moments_from_json(path: str, run: Run) -> MomentSet:
    run.inputs.append(path)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read moments file {path}: {exc}") from exc
    data = data.get("inputs", data)
    keys = ("g2", "g3", "g4", "B_prime")
    missing = [k for k in keys if k not in data]
    if missing:
        raise ValidationError(f"moments file lacks {', '.join(missing)}")
    sig = {k: float(data.get(k, 0.0)) for k in ("sigma_g2", "sigma_g3", "sigma_g4", "sigma_B")}
    return MomentSet(*(float(data[k]) for k in keys), **sig)


def _pn_report(args, source, run: Run) -> dict:
    """``source`` is a moments JSON path or a tag-file path."""
    eta = args.eta
    if args.eta_from:
        eta = _eta_from_file(args.eta_from, run)
    if str(source).endswith(".json"):
        moments = _moments_from_json(str(source), run)
        estimates = None
    else:
        stream = _read_input(str(source), run)
        sm, _ = photon_numbers(stream, None, args.window)
        moments = sm.moment_set()
        estimates = {f"g{m}": e.to_dict() for m, e in sm.estimates.items()}
    out: dict = {}
    if args.estimate_eta:
        eta = estimate_eta(extract(moments).detected)
        out["eta_estimate"] = eta
    try:
        rep = extract(moments, eta)
    except NumericalError as exc:
        if not args.estimate_eta:
            raise
        # the transmission estimate stands on its own; report why p_n could not follow
        rep = extract(moments)
        out["source_error"] = str(exc)
    out.update(rep.to_dict())
    if estimates is not None:
        out["estimates"] = estimates
    return out


def _sweep_rows(args, run: Run):
    d = Path(args.input)
    files = sorted(d.glob("*.ptag"))
    if not files:
        raise DataError(f"no .ptag files in {d}")
    rows, errors = [], {}
    for f in files:
        meta_path = f.with_name(f.name + ".meta.json")
        theta = json.loads(meta_path.read_text()).get("theta_over_pi") if meta_path.exists() else None
        try:
            rep = _pn_report(args, f, run)
            p = rep.get("source") or rep["detected"]
            pur = rep.get("purities") or [math.nan] * 3
            rows.append([theta, p["p"][0], p["p"][1], *pur[1:4]])
        except PhotonStatsError as exc:
            errors[f.name] = str(exc)
            rows.append([theta] + [math.nan] * 5)
    if errors:
        run.notes["point_errors"] = errors
        for name, msg in errors.items():
            print(f"warning: {name}: {msg}", file=sys.stderr)
    return rows


def cmd_extract_pn(args, run: Run) -> None:
    out = Path(args.out)
    if Path(args.input).is_dir():
        write_rows(run.output(out), PN_HEADER, _sweep_rows(args, run))
    else:
        write_json(run.output(out), _pn_report(args, args.input, run))


# -- gate-scan ----------------------------------------------------------------

def cmd_gate_scan(args, run: Run) -> None:
    stream = _read_input(args.input, run)
    starts = _int_list(args.t_start, "t-start")
    channels = tuple(_int_list(args.channels, "channels"))
    points = gated_g2_scan(stream, starts, args.t_stop, args.bin_width, args.window,
                           channels, args.max_delay, args.offset)
    rows = [[p.t_start, p.count_rate, p.g2.value, p.g2.sigma] for p in points]
    write_rows(run.output(args.out), GATE_HEADER, rows)


# -- hom ----------------------------------------------------------------------

def _load_emissions(path: str, run: Run) -> tuple[EmissionRecords, float]:
    run.inputs.append(path)
    try:
        with np.load(path) as z:
            rec = EmissionRecords(z["counts"].astype(np.int64), z["times"].astype(np.float64),
                                  float(z["lifetime"]))
            theta = float(z["theta_over_pi"]) if "theta_over_pi" in z else math.nan
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read emission samples {path}: {exc}") from exc
    return rec, theta


def _model_g2(records: EmissionRecords, t_start: float | None = None) -> tuple[float, int]:
    """g2 from emitted photon numbers (lossless), optionally counting only t >= t_start."""
    if t_start is None:
        n = records.counts
    else:
        keep = records.times >= t_start
        n = np.bincount(records.pulse_indices()[keep], minlength=len(records))
    mean = n.mean()
    if mean == 0:
        raise DataError("no photons emitted")
    return float((n * (n - 1)).mean() / mean ** 2), int(n.sum())


def _hom_row(records: EmissionRecords, theta: float, gate: float | None, rep_rate: float) -> HomReport:
    tau = records.lifetime
    g2, n_all = _model_g2(records)
    M = overlap_from_emission_times(emission_pairs(records), tau)
    V_raw = expected_visibility(M, g2)
    V_gated = rate = None
    if gate is not None:
        g2g, n_gated = _model_g2(records, gate)
        Mg = overlap_from_emission_times(emission_pairs(records), tau, gate)
        V_gated = expected_visibility(Mg, g2g)
        rate = n_gated / len(records) * rep_rate
    else:
        rate = n_all / len(records) * rep_rate
    return HomReport(V_raw, g2, M, None, V_gated, rate)


def cmd_hom(args, run: Run) -> None:
    rows = []
    if args.central is not None or args.reference is not None:
        if args.central is None or args.reference is None or args.g2 is None:
            raise ValidationError("counts mode needs --central, --reference and --g2")
        V_raw = visibility_from_counts(args.central, args.reference, args.pattern_factor)
        M = correct_visibility(V_raw, args.g2)
        rows.append([args.theta, V_raw, args.g2, M, None, None])
    else:
        if not args.inputs:
            raise ValidationError("give emission-sample files or --central/--reference counts")
        rep_rate = 1e12 / args.period
        for path in args.inputs:
            records, theta = _load_emissions(path, run)
            r = _hom_row(records, theta, args.gate_start, rep_rate)
            rows.append([theta, r.V_raw, r.g2, r.M, r.V_gated, r.count_rate])
    write_rows(run.output(args.out), HOM_HEADER, rows)


# -- selftest -----------------------------------------------------------------

def cmd_selftest(args, run: Run) -> None:
    from .selftest import run_selftest

    results = run_selftest(seed=0 if args.seed is None else args.seed, quick=args.quick)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}")
    run.notes["results"] = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
    if args.out:
        write_rows(run.output(args.out), ["name", "passed", "detail"],
                   ([r.name, int(r.passed), r.detail] for r in results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise NumericalError(f"{len(failed)} self-test case(s) failed: {', '.join(failed)}")


# -- driver -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, help="worker threads for parallel kernels")

    p = argparse.ArgumentParser(prog="photonstats", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate a tag file (or a theta sweep)")
    s.add_argument("--emissions", action="store_true", help="also save emission samples (.npz)")
    s.set_defaults(func=cmd_simulate, need_out=True)

    s = sub.add_parser("correlate", parents=[common], help="histogram and g^(m)(0)")
    s.add_argument("input")
    s.add_argument("--order", "-m", type=int, choices=(2, 3, 4), default=2)
    s.add_argument("--channels", help="comma list, default 1..m")
    s.add_argument("--bin-width", type=int)
    s.add_argument("--max-delay", type=int)
    s.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    s.set_defaults(func=cmd_correlate, need_out=True)

    s = sub.add_parser("extract-pn", parents=[common], help="photon-number distribution")
    s.add_argument("input", help="tag file, moments JSON, or a directory of sweep tag files")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--eta", type=float)
    g.add_argument("--eta-from", help="JSON with eta_estimate or eta")
    g.add_argument("--estimate-eta", action="store_true", help="treat input as a pi-pulse run")
    s.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    s.set_defaults(func=cmd_extract_pn, need_out=True)

    s = sub.add_parser("gate-scan", parents=[common], help="g2(0) and rate versus gate start")
    s.add_argument("input")
    s.add_argument("--t-start", default="0:400:25", help="comma list or start:stop:step (ps)")
    s.add_argument("--t-stop", type=int, default=DEFAULT_T_STOP)
    s.add_argument("--bin-width", type=int, default=100)
    s.add_argument("--max-delay", type=int)
    s.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    s.add_argument("--offset", type=int, default=0)
    s.add_argument("--channels", default="1,2")
    s.set_defaults(func=cmd_gate_scan, need_out=True)

    s = sub.add_parser("hom", parents=[common], help="HOM visibility and overlap")
    s.add_argument("inputs", nargs="*", help="emission-sample .npz files")
    s.add_argument("--gate-start", type=float, help="gate start in ps after pulse start")
    s.add_argument("--period", type=float, default=12_500.0, help="repetition period (ps)")
    s.add_argument("--central", type=float)
    s.add_argument("--reference", type=float)
    s.add_argument("--pattern-factor", type=float, default=2.0)
    s.add_argument("--g2", type=float)
    s.add_argument("--theta", type=float, default=math.nan)
    s.set_defaults(func=cmd_hom, need_out=True)

    s = sub.add_parser("selftest", parents=[common], help="oracle and reference-source checks")
    s.add_argument("--quick", action="store_true", help="smaller reference runs")
    s.set_defaults(func=cmd_selftest, need_out=False)
    return p


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise ValidationError(f"threads: must be 1..{numba.config.NUMBA_NUM_THREADS}")
    numba.set_num_threads(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = Run(args.command, args)
    code, error = 0, None
    try:
        if args.need_out and not args.out:
            raise ValidationError("--out is required")
        _set_threads(args.threads)
        args.func(args, run)
    except PhotonStatsError as exc:
        code, error = exc.exit_code, f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        code, error = DataError.exit_code, f"OSError: {exc}"
    if error:
        print(f"error: {error}", file=sys.stderr)
    manifest = run.manifest("ok" if code == 0 else "error", code, error)
    path = _manifest_path(args.out)
    if path is None:
        print(json.dumps(manifest, default=_json_default), file=sys.stderr)
    else:
        write_json(path, manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
