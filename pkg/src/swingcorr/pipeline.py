"""End-to-end helpers shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

import numpy as np

from .grid import GridModel
from .metrics import EvaluationReport, normalized_mse
from .modal import ImpulseResponse, decompose, impulse_response
from .recovery import RecoveredResponse, RecoveryConfig, RecoveryError, recover_response, reference_angle
from .simulate import AmbientConfig, TimeSeries, simulate_ambient

KIND_OF_QTY = {"freq": "frequency", "flow": "line-flow"}


def response_label(channel: str, kind: str) -> str:
    """Response-variable label for a measured channel and response kind."""
    typ, ident, qty = channel.split(":")
    if kind == "frequency":
        return f"{typ}:{ident}:freq"
    if kind == "line-flow":
        return f"line:{ident}:flow"
    return f"{typ}:{ident}:angle"


def natural_kind(channel: str) -> str:
    typ, _, qty = channel.split(":")
    if qty in KIND_OF_QTY:
        return KIND_OF_QTY[qty]
    return "rotor-angle" if typ == "gen" else "bus-angle"


def all_channels(model: GridModel) -> list[str]:
    ch = [f"gen:{g}:freq" for g in model.generator_ids]
    ch += [f"gen:{g}:angle" for g in model.generator_ids]
    ch += [f"bus:{b}:angle" for b in model.interior_ids]
    ch += [f"line:{ln}:flow" for ln in model.line_labels]
    return ch


def selected_lines(model: GridModel, count: int = 3) -> list[str]:
    """First ``count`` lines not touching a generator bus (falls back to case order)."""
    gens = {str(g) for g in model.generator_ids}
    inner = [ln for ln in model.line_labels if not set(ln.split("-")) & gens]
    picked = inner[:count]
    for ln in model.line_labels:
        if len(picked) >= count:
            break
        if ln not in picked:
            picked.append(ln)
    return picked


def default_targets(model: GridModel) -> list[tuple[str, str]]:
    """(channel, kind) pairs: frequency and rotor angle at every generator, three line flows."""
    t = [(f"gen:{g}:freq", "frequency") for g in model.generator_ids]
    t += [(f"gen:{g}:angle", "rotor-angle") for g in model.generator_ids]
    t += [(f"line:{ln}:flow", "line-flow") for ln in selected_lines(model)]
    return t


def output_row(model: GridModel, label: str) -> np.ndarray:
    typ, ident, qty = label.split(":")
    if typ == "line":
        return model.flow_row(ident)
    return model.bus_angle_row(int(ident))


def model_references(model: GridModel, source_gen: int, targets, tau) -> list[ImpulseResponse]:
    """Closed-form (zero-mode deflated) responses for ``(channel, kind)`` targets."""
    gamma = model.damping_ratio()
    if gamma is None:
        raise ValueError("closed-form responses need uniform damping (D = gamma M)")
    dec = decompose(model.M, model.K, gamma)
    k = model.generator_ids.index(source_gen)
    out = []
    for channel, kind in targets:
        label = response_label(channel, kind)
        row = output_row(model, label)
        out.append(impulse_response(dec, kind, k, row, tau, f"gen:{source_gen}", label))
    return out


def ambient_records(model: GridModel, cfg: AmbientConfig, channels=None) -> dict[str, TimeSeries]:
    channels = list(channels or all_channels(model))
    return {ts.label: ts for ts in simulate_ambient(model, cfg, channels)}


def apply_reference(records: dict[str, TimeSeries], policy: str,
                    model: GridModel | None = None) -> dict[str, TimeSeries]:
    """Subtract a reference from every angle channel and every frequency channel.

    ``coi``: inertia-weighted mean of the generator channels; ``average``:
    arithmetic mean of all channels of the same quantity; ``none``; or an
    angle channel label (its ``freq`` sibling, when present, references the
    frequency channels).  Referencing frequencies removes the center-of-inertia
    drift, which otherwise leaks into the passband.
    """
    if policy == "none":
        return dict(records)
    out = dict(records)
    for qty in ("angle", "freq"):
        chans = [k for k in records if k.endswith(":" + qty)]
        if not chans:
            continue
        if policy == "coi":
            if model is None:
                raise RecoveryError("reference 'coi' needs the case (generator inertias)")
            gch = [f"gen:{g}:{qty}" for g in model.generator_ids]
            missing = [c for c in gch if c not in records]
            if missing:
                raise RecoveryError(f"reference 'coi' needs channels {missing}")
            ref = reference_angle([records[c] for c in gch], weights=model.inertia)
        elif policy == "average":
            ref = reference_angle([records[c] for c in chans])
        else:
            if policy not in records:
                raise RecoveryError(f"reference channel {policy!r} not found")
            label = policy if qty == "angle" else policy.rsplit(":", 1)[0] + ":freq"
            if label not in records:
                continue
            ref = records[label]
        for c in chans:
            out[c] = records[c].replace(samples=records[c].samples - ref.samples)
    return out


def source_channel(source_gen: int, kind: str, target_channel: str) -> str:
    """Default source channel: generator frequency for frequency-from-frequency, else angle."""
    if kind == "frequency" and target_channel.endswith(":freq"):
        return f"gen:{source_gen}:freq"
    return f"gen:{source_gen}:angle"


def recover_all(records: dict[str, TimeSeries], source_gen: int, targets,
                cfg: RecoveryConfig, model: GridModel | None = None,
                source_override: str | None = None) -> list[RecoveredResponse]:
    prepared = apply_reference(records, cfg.reference, model)
    out = []
    for channel, kind in targets:
        src = source_override or source_channel(source_gen, kind, channel)
        for c in (src, channel):
            if c not in prepared:
                raise RecoveryError(f"channel {c!r} not found")
        out.append(recover_response(prepared[src], prepared[channel], kind, cfg,
                                    f"gen:{source_gen}", response_label(channel, kind)))
    return out


def wscc_targets(model: GridModel) -> list[tuple[str, str]]:
    """Default targets plus every interior bus angle."""
    return default_targets(model) + [(f"bus:{b}:angle", "bus-angle") for b in model.interior_ids]


def evaluate_recovery(model: GridModel, source_gen: int, targets, amb: AmbientConfig,
                      cfg: RecoveryConfig, records=None) -> EvaluationReport:
    """Simulate one ambient record (unless given), recover every target, score against the model."""
    if records is None:
        records = ambient_records(model, amb)
    est = recover_all(records, source_gen, targets, cfg, model)
    tau = est[0].lags
    refs = model_references(model, source_gen, targets, tau)
    report = EvaluationReport(config={"seed": amb.seed, "target": amb.target,
                                      "passband": cfg.passband})
    for r, e in zip(refs, est):
        report.nmse.append((r.source, r.target, r.kind, normalized_mse(r, e)))
    return report
