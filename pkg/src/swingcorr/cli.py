"""Command line: ``swingcorr {eigs,simulate,recover,compare}``.

Exit codes: 0 success, 2 user/config error, 3 numerical failure.
Every subcommand accepts ``--config FILE`` (flat ``key = value``); flags win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .grid import CaseError, GridModel, NetworkError, build_model, load_case
from .metrics import EvaluationReport, MetricsError, lag_table, normalized_mse
from .modal import ModalError, decompose
from .pipeline import (all_channels, default_targets, natural_kind, recover_all, response_label,
                       source_channel)
from .recovery import RecoveryConfig, RecoveryError
from .simulate import (AmbientConfig, SimulationError, TimeSeries, add_measurement_noise,
                       simulate_ambient, simulate_impulse)

log = logging.getLogger("swingcorr")

USER_ERRORS = (CaseError, NetworkError, RecoveryError, MetricsError, io.FormatError,
               KeyError, ValueError, FileNotFoundError)
NUMERIC_ERRORS = (ModalError, SimulationError, np.linalg.LinAlgError, FloatingPointError)


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    base = args.out or os.environ.get("SWINGCORR_OUTPUT_DIR") or "."
    p = Path(base)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _gen_id(text) -> int:
    s = str(text).strip().lower()
    if s.startswith("gen:"):
        s = s[4:]
    s = s.lstrip("g")
    try:
        return int(s)
    except ValueError:
        raise UsageError(f"bad generator id {text!r}") from None


def _model(args) -> GridModel:
    model = build_model(load_case(args.case))
    if getattr(args, "gamma", None) is not None:
        if args.gamma < 0:
            raise UsageError("--gamma must be >= 0")
        model = model.with_damping(gamma=args.gamma)
    elif getattr(args, "damping_ratios", None):
        ratios = [float(x) for x in str(args.damping_ratios).split(",")]
        model = model.with_damping(per_generator=ratios)
    return model


# -- eigs -------------------------------------------------------------------

def cmd_eigs(args) -> int:
    model = _model(args)
    gamma = model.damping_ratio()
    if gamma is None:
        raise UsageError("eigs needs uniform damping; pass --gamma")
    dec = decompose(model.M, model.K, gamma)
    out = _out_dir(args)
    rows = ["mode,lambda,freq_hz,damping_ratio,zero_mode"]
    for i, lam in enumerate(dec.lambdas):
        zero = i < dec.zero_mode_count
        zeta = gamma / (2 * np.sqrt(lam)) if lam > 0 else float("inf")
        rows.append(f"{i + 1},{lam:.8e},{dec.mode_frequencies_hz()[i]:.8e},{zeta:.8e},{int(zero)}")
        print(f"mode {i + 1}: lambda={lam:.6g}  f={dec.mode_frequencies_hz()[i]:.4f} Hz"
              + ("  [zero mode]" if zero else ""))
    (out / "modes.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    shapes = ["generator," + ",".join(f"mode{i + 1}" for i in range(dec.n))]
    for g, row in zip(model.generator_ids, dec.V):
        shapes.append(f"{g}," + ",".join(f"{v:.8e}" for v in row))
    (out / "mode_shapes.csv").write_text("\n".join(shapes) + "\n", encoding="utf-8")
    return 0


# -- simulate ---------------------------------------------------------------

def _channels(args, model) -> list[str]:
    if args.channels:
        chans = [c.strip() for c in str(args.channels).split(",") if c.strip()]
    else:
        chans = all_channels(model)
    return chans


def cmd_simulate(args) -> int:
    model = _model(args)
    out = _out_dir(args)
    cfg = AmbientConfig(alpha=args.alpha, duration=args.duration, ts=args.ts, seed=args.seed,
                        target=args.perturb, burn_in=args.burn_in)
    channels = _channels(args, model)
    records = simulate_ambient(model, cfg, channels)
    written = []
    for j, ts in enumerate(records):
        if args.noise_level:
            # measurement-noise stream j: SeedSequence(seed).spawn(1 + n)[1 + j]
            child = np.random.SeedSequence(args.seed).spawn(1 + len(records))[1 + j]
            ts = add_measurement_noise(ts, args.noise_level, child.generate_state(1)[0])
        written.append(io.write_timeseries(out / f"{io.sanitize(ts.label)}.csv", ts).name)
    if args.impulse is not None:
        k_id = _gen_id(args.impulse)
        k = model.generator_ids.index(k_id)
        targets = default_targets(model)
        chans = [c for c, _ in targets]
        sims = simulate_impulse(model, k, chans, args.ts, args.horizon)
        idir = out / "impulse"
        idir.mkdir(exist_ok=True)
        for (ch, kind), ts in zip(targets, sims):
            name = io.response_filename(f"gen:{k_id}", response_label(ch, kind), kind)
            io.write_response(idir / name, ts.times, ts.samples)
            written.append(f"impulse/{name}")
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config", "out")}
    io.write_manifest(out / "manifest.json", config, written)
    print(f"wrote {len(written)} files to {out}")
    return 0


# -- recover ----------------------------------------------------------------

def _read_records(directory: Path) -> dict[str, TimeSeries]:
    recs = {}
    for p in sorted(directory.glob("*.csv")):
        ts = io.read_timeseries(p)
        recs[ts.label] = ts
    if not recs:
        raise UsageError(f"no time-series CSV files in {directory}")
    return recs


def _targets(args, records) -> list[tuple[str, str]]:
    if args.target:
        out = []
        for spec in args.target:
            if "@" in spec:
                ch, kind = spec.split("@", 1)
            else:
                ch, kind = spec, natural_kind(spec)
            out.append((ch, kind))
        return out
    out = []
    for label in records:
        if label.endswith(":freq"):
            if args.freq_from == "freq":
                out.append((label, "frequency"))
            continue
        out.append((label, natural_kind(label)))
        if args.freq_from == "angle" and label.startswith("gen:") and label.endswith(":angle"):
            out.append((label, "frequency"))
    return out


def _recovery_config(args) -> RecoveryConfig:
    lo, hi = (float(x) for x in str(args.passband).replace(",", " ").split())
    return RecoveryConfig(passband=(lo, hi), taps=args.taps, max_lag=args.max_lag,
                          nadir=args.nadir, reference=args.reference)


def cmd_recover(args) -> int:
    records = _read_records(Path(args.input))
    model = _model(args) if args.case else None
    source_gen = _gen_id(args.source)
    cfg = _recovery_config(args)
    targets = _targets(args, records)
    src = args.source_channel
    if src is not None and src not in records:
        raise UsageError(f"source channel {src!r} not found")
    needed = {src or source_channel(source_gen, k, c) for c, k in targets}
    missing = sorted(c for c in needed if c not in records)
    if missing:
        raise UsageError(f"missing source channel(s): {', '.join(missing)}")
    if cfg.reference == "coi" and model is None:
        raise UsageError("reference 'coi' needs --case; or pass --reference average|none")
    responses = recover_all(records, source_gen, targets, cfg, model, src)
    out = _out_dir(args)
    written = []
    for r in responses:
        name = io.response_filename(r.source, r.target, r.kind)
        io.write_response(out / name, r.lags, r.samples, r.physical)
        written.append(name)
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config", "out")}
    io.write_manifest(out / "manifest.json", config, written)
    print(f"recovered {len(responses)} responses into {out}")
    if args.ref_dir:
        report = compare_dirs(Path(args.ref_dir), out)
        write_report(report, out)
        print(format_report(report))
    return 0


# -- compare ----------------------------------------------------------------

def _response_files(d: Path) -> dict[str, Path]:
    files = {}
    for p in sorted(d.glob("src-*__*__*.csv")):
        io.parse_response_filename(p.name)
        files[p.name] = p
    return files


def compare_dirs(ref_dir: Path, est_dir: Path) -> EvaluationReport:
    ref, est = _response_files(ref_dir), _response_files(est_dir)
    common = sorted(set(ref) & set(est))
    if not common:
        raise UsageError(f"no matching response files between {ref_dir} and {est_dir}")
    report = EvaluationReport(config={"ref_dir": str(ref_dir), "est_dir": str(est_dir)})
    freq = []
    for name in common:
        src, tgt, kind = io.parse_response_filename(name)
        tr, vr, _ = io.read_response(ref[name])
        te, ve, _ = io.read_response(est[name])
        report.nmse.append((src, tgt, kind, normalized_mse((tr, vr), (te, ve))))
        if kind == "frequency":
            freq.append((src, tgt, (te, ve)))
    sources = {s for s, _, _ in freq}
    for s in sorted(sources):
        group = [(t, r) for ss, t, r in freq if ss == s]
        src_label = f"{s}:freq"
        if src_label in dict(group):
            report.nadirs.extend(lag_table(group, src_label))
    return report


def format_report(report: EvaluationReport) -> str:
    lines = ["source      target              kind          nmse"]
    for s, t, k, v in report.nmse:
        lines.append(f"{s:<11} {t:<19} {k:<13} {v:.4f}")
    lines.append("mean per kind: " + ", ".join(f"{k}={v:.4f}" for k, v in report.mean_nmse().items()))
    if report.nadirs:
        lines.append("target              nadir_time  nadir_value  lag")
        for r in report.nadirs:
            lines.append(f"{r.target:<19} {r.time:10.3f}  {r.value:+.4f}   {r.lag:.3f}")
    return "\n".join(lines)


def write_report(report: EvaluationReport, out: Path):
    rows = ["source,target,kind,nmse"]
    rows += [f"{s},{t},{k},{v:.8e}" for s, t, k, v in report.nmse]
    (out / "report_nmse.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    rows = ["target,nadir_time,nadir_value,lag,distance,speed"]
    for r in report.nadirs:
        rows.append(f"{r.target},{r.time:.6f},{r.value:.8e},{r.lag:.6f},"
                    f"{'' if r.distance is None else r.distance},"
                    f"{'' if r.speed is None else f'{r.speed:.6g}'}")
    (out / "report_nadir.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (out / "report.txt").write_text(format_report(report) + "\n", encoding="utf-8")


def cmd_compare(args) -> int:
    report = compare_dirs(Path(args.ref_dir), Path(args.est_dir))
    if args.out:
        write_report(report, _out_dir(args))
    print(format_report(report))
    return 0


# -- parser -----------------------------------------------------------------

def _add_model_args(p):
    p.add_argument("--gamma", type=float, help="uniform damping ratio (D = gamma M)")
    p.add_argument("--damping-ratios", help="comma-separated per-generator D/M ratios")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swingcorr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eigs", help="modal report of a case")
    p.add_argument("case")
    _add_model_args(p)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eigs)

    p = sub.add_parser("simulate", help="ambient records (and model impulse responses)")
    p.add_argument("case")
    _add_model_args(p)
    p.add_argument("--duration", type=float, default=600.0)
    p.add_argument("--ts", type=float, default=0.01)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--perturb", choices=("generator-inputs", "loads"), default="generator-inputs")
    p.add_argument("--burn-in", type=float)
    p.add_argument("--channels", help="comma-separated channel names (default: all)")
    p.add_argument("--noise-level", type=float, default=0.0,
                   help="relative measurement noise (std / RMS)")
    p.add_argument("--impulse", help="also write closed-form-equivalent impulse responses, e.g. g2")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", help="recover responses from ambient CSVs")
    p.add_argument("input", help="directory of time-series CSVs")
    p.add_argument("--case")
    _add_model_args(p)
    p.add_argument("--source", required=False, help="input generator, e.g. g2")
    p.add_argument("--source-channel", help="override the source channel")
    p.add_argument("--target", action="append",
                   help="target channel[@kind]; repeatable (default: every channel)")
    p.add_argument("--freq-from", choices=("freq", "angle"), default="freq")
    p.add_argument("--passband", default="0.1 0.7", help="'low high' in Hz")
    p.add_argument("--taps", type=int)
    p.add_argument("--max-lag", type=float, default=10.0)
    p.add_argument("--reference", default="coi")
    p.add_argument("--nadir", type=float)
    p.add_argument("--ref-dir", help="directory of model-based responses to evaluate against")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("compare", help="NMSE and nadir-lag report for two response directories")
    p.add_argument("ref_dir")
    p.add_argument("est_dir")
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_compare)
    return parser


def _apply_config(parser, argv):
    """Re-parse with config-file values as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = io.read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known or key in ("config", "func"):
            raise UsageError(f"unknown config key {key!r}")
        act = known[key]
        if act.type is not None:
            defaults[key] = act.type(raw)
        elif isinstance(act, argparse._AppendAction):
            defaults[key] = [s.strip() for s in raw.split(",")]
        else:
            defaults[key] = raw
    positional = [a.dest for a in sub._actions if not a.option_strings and a.dest in defaults]
    if positional:
        raise UsageError(f"positional arguments cannot come from config: {positional}")
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "recover" and args.source is None:
            raise UsageError("--source is required")
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except USER_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
