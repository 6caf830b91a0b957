"""Experiment sweeps: run grids of scenarios and emit deterministic CSV.

A sweep varies one scenario field over a value list, crossed with a protocol
list and a repetition count. Every (value, repetition) point derives its own
seed by hashing (base seed, value index, repetition index); the protocol is
deliberately left out of the hash so competing protocols face identical
topologies, faults, and noise (matched pairs).

CSV output is byte-stable: fixed column order, '\n' line endings, floats
rendered by repr.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
from dataclasses import dataclass, field
from statistics import mean, stdev

from .config import (
    BYPASS,
    DMRF,
    GREEDY_MAX_RATE,
    GREEDY_MIN_DELAY,
    ConfigError,
    ScenarioConfig,
    validate,
)
from .engine import RunResult, run
from .topology import deploy

CSV_COLUMNS = (
    "parameter",
    "value",
    "protocol",
    "repetition",
    "seed",
    "injected",
    "delivered",
    "expired",
    "dropped_no_route",
    "buffer_drops",
    "control_packets",
    "mean_delay_ms",
    "p95_delay_ms",
    "energy_total_j",
    "tx_total",
    "tx_max",
)

PRESET_NAMES = ("fig5", "fig6", "fig7", "fig8", "fig9")

_MASK = (1 << 64) - 1


@dataclass
class SweepSpec:
    """One experiment grid: parameter values x protocols x repetitions."""

    parameter: str
    values: list
    base: ScenarioConfig
    protocols: list[str]
    repetitions: int = 10
    # per-value-index extra field overrides, for axes that co-vary
    overrides: dict[int, dict] = field(default_factory=dict)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def point_seed(base_seed: int, value_index: int, rep_index: int) -> int:
    """Stable per-point seed; independent of the protocol under test."""
    h = _splitmix64(base_seed & _MASK)
    h = _splitmix64(h ^ (value_index & _MASK))
    h = _splitmix64(h ^ (rep_index & _MASK))
    return h


def execute_scenario(
    cfg: ScenarioConfig, seed: int, collect_trace: bool = False
) -> RunResult:
    """Deploy the scenario's topology and run it once with the given seed."""
    topo = deploy(
        cfg.node_count,
        cfg.region,
        cfg.distribution,
        rng_seed=seed,
        comm_radius=cfg.comm_radius,
        max_tx_distance=cfg.max_tx_distance,
    )
    return run(topo, cfg.protocol, cfg, seed, collect_trace=collect_trace)


def _result_row(
    parameter: str,
    value,
    protocol: str,
    repetition: int,
    seed: int,
    result: RunResult,
) -> dict:
    m = result.metrics
    tx_values = list(m.per_node_tx.values())
    return {
        "parameter": parameter,
        "value": value,
        "protocol": protocol,
        "repetition": repetition,
        "seed": seed,
        "injected": m.injected,
        "delivered": m.delivered,
        "expired": m.expired,
        "dropped_no_route": m.dropped_no_route,
        "buffer_drops": m.buffer_drops,
        "control_packets": m.control_packets,
        "mean_delay_ms": m.mean_delay_ms,
        "p95_delay_ms": m.p95_delay_ms,
        "energy_total_j": m.energy_total_j,
        "tx_total": sum(tx_values),
        "tx_max": max(tx_values, default=0),
    }


def _execute_point(task: tuple) -> dict:
    parameter, value, protocol, repetition, seed, cfg = task
    result = execute_scenario(cfg, seed)
    return _result_row(parameter, value, protocol, repetition, seed, result)


def _point_tasks(spec: SweepSpec) -> list[tuple]:
    tasks = []
    for vi, value in enumerate(spec.values):
        fields = {spec.parameter: value}
        fields.update(spec.overrides.get(vi, {}))
        for protocol in spec.protocols:
            for rep in range(spec.repetitions):
                seed = point_seed(spec.base.seed, vi, rep)
                cfg = dataclasses.replace(
                    spec.base, protocol=protocol, seed=seed, **fields
                )
                validate(cfg)
                tasks.append((spec.parameter, value, protocol, rep, seed, cfg))
    return tasks


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[dict]:
    """Run the whole grid, in order (value, protocol, repetition).

    Any failing run aborts the sweep. Worker count comes from the
    DMRFSIM_WORKERS environment variable unless given explicitly; results
    are identical either way because every point is independently seeded.
    """
    tasks = _point_tasks(spec)
    if workers is None:
        workers = int(os.environ.get("DMRFSIM_WORKERS", "1"))
    if workers > 1 and len(tasks) > 1:
        from multiprocessing import Pool

        with Pool(workers) as pool:
            return pool.map(_execute_point, tasks)
    return [_execute_point(t) for t in tasks]


def write_csv(rows: list[dict], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)


def rows_to_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()


def read_csv(fh) -> list[dict]:
    """Inverse of write_csv, restoring numeric types."""
    rows = []
    for raw in csv.DictReader(fh):
        row = dict(raw)
        for key in ("repetition", "seed", "injected", "delivered", "expired",
                    "dropped_no_route", "buffer_drops", "control_packets",
                    "tx_total", "tx_max"):
            row[key] = int(row[key])
        for key in ("mean_delay_ms", "p95_delay_ms", "energy_total_j"):
            row[key] = float(row[key])
        try:
            row["value"] = int(row["value"])
        except ValueError:
            try:
                row["value"] = float(row["value"])
            except ValueError:
                pass
        rows.append(row)
    return rows


# ----------------------------------------------------------------------
# presets

def make_preset(name: str, base: ScenarioConfig) -> SweepSpec:
    """The predefined experiment grids.

    fig5: delivery vs fault ratio, three protocols.
    fig6: delivery vs standing buffer fill under fast injection.
    fig7: delivery vs void radius, all four protocols.
    fig8: delay vs void radius, jumping vs perimeter bypass.
    fig9: control overhead vs network size at fixed density.
    """
    if name == "fig5":
        return SweepSpec(
            parameter="fault_ratio",
            values=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            base=base,
            protocols=[DMRF, GREEDY_MIN_DELAY, GREEDY_MAX_RATE],
        )
    if name == "fig6":
        return SweepSpec(
            parameter="buffer_fill",
            values=[0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            base=dataclasses.replace(base, injection_period_ms=1.5),
            protocols=[DMRF, GREEDY_MIN_DELAY],
        )
    if name == "fig7":
        return SweepSpec(
            parameter="void_radius",
            values=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            base=base,
            protocols=[DMRF, GREEDY_MIN_DELAY, GREEDY_MAX_RATE, BYPASS],
        )
    if name == "fig8":
        return SweepSpec(
            parameter="void_radius",
            values=[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            base=base,
            protocols=[DMRF, BYPASS],
        )
    if name == "fig9":
        side = {100: 10.0, 200: 14.142135623730951, 400: 20.0}
        return SweepSpec(
            parameter="node_count",
            values=[100, 200, 400],
            base=dataclasses.replace(base, comm_radius=1.6),
            protocols=[DMRF, GREEDY_MIN_DELAY],
            overrides={
                i: {"region": (side[n], side[n])}
                for i, n in enumerate([100, 200, 400])
            },
        )
    raise ConfigError(f"preset: expected one of {list(PRESET_NAMES)}, got {name!r}")


# ----------------------------------------------------------------------
# summaries

def _fmt(x: float) -> str:
    return format(x, ".6g")


def _linear_r2(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    mx, my = mean(xs), mean(ys)
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0:
        return 0.0
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((y - (slope * x + intercept)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - my) ** 2 for y in ys)
    if ss_tot == 0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def summarize(rows: list[dict]) -> str:
    """Aggregate sweep rows into mean +/- std per point plus pass/fail flags
    for the claims each experiment family is meant to check."""
    groups: dict[tuple, list[dict]] = {}
    order: list[tuple] = []
    for row in rows:
        key = (row["parameter"], row["value"], row["protocol"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)

    lines = [
        "parameter value protocol n delivery_ratio mean_delay_ms control_packets energy_j"
    ]
    stats: dict[tuple, dict] = {}
    for key in order:
        members = groups[key]
        ratios = [r["delivered"] / r["injected"] for r in members]
        delays = [r["mean_delay_ms"] for r in members if r["delivered"] > 0]
        controls = [float(r["control_packets"]) for r in members]
        energies = [r["energy_total_j"] for r in members]
        entry = {
            "n": len(members),
            "ratio_mean": mean(ratios),
            "ratio_std": stdev(ratios) if len(ratios) > 1 else 0.0,
            "delay_mean": mean(delays) if delays else 0.0,
            "control_mean": mean(controls),
            "energy_mean": mean(energies),
        }
        stats[key] = entry
        parameter, value, protocol = key
        lines.append(
            f"{parameter} {value} {protocol} {entry['n']} "
            f"{_fmt(entry['ratio_mean'])}+/-{_fmt(entry['ratio_std'])} "
            f"{_fmt(entry['delay_mean'])} {_fmt(entry['control_mean'])} "
            f"{_fmt(entry['energy_mean'])}"
        )

    lines.extend(_flag_lines(order, stats))
    return "\n".join(lines) + "\n"


def _flag_lines(order: list[tuple], stats: dict[tuple, dict]) -> list[str]:
    lines: list[str] = []
    parameters = {key[0] for key in order}

    def flag(ok: bool, text: str) -> None:
        lines.append(f"{'PASS' if ok else 'FAIL'}: {text}")

    if "void_radius" in parameters:
        key = ("void_radius", 7.0, DMRF)
        if key in stats:
            r = stats[key]["ratio_mean"]
            flag(r >= 0.90, f"DMRF delivery at void radius 7 is {_fmt(r)} (>= 0.90)")
        for proto in (GREEDY_MIN_DELAY, GREEDY_MAX_RATE):
            key = ("void_radius", 7.0, proto)
            if key in stats:
                r = stats[key]["ratio_mean"]
                flag(r <= 0.05, f"{proto} delivery at void radius 7 is {_fmt(r)} (<= 0.05)")

    for parameter, comparator in (
        ("fault_ratio", (GREEDY_MIN_DELAY, GREEDY_MAX_RATE)),
        ("buffer_fill", (GREEDY_MIN_DELAY,)),
    ):
        if parameter not in parameters:
            continue
        values = sorted({key[1] for key in order if key[0] == parameter})
        for proto in comparator:
            pairs = [
                (v, stats[(parameter, v, DMRF)]["ratio_mean"],
                 stats[(parameter, v, proto)]["ratio_mean"])
                for v in values
                if (parameter, v, DMRF) in stats and (parameter, v, proto) in stats
            ]
            if not pairs:
                continue
            ok = all(d >= g for _, d, g in pairs)
            worst = min(pairs, key=lambda p: p[1] - p[2])
            flag(
                ok,
                f"DMRF delivery >= {proto} at every {parameter} "
                f"(tightest at {worst[0]}: {_fmt(worst[1])} vs {_fmt(worst[2])})",
            )

    if "node_count" in parameters:
        points = sorted(
            (key[1], stats[key]["control_mean"])
            for key in stats
            if key[0] == "node_count" and key[2] == DMRF
        )
        if len(points) >= 2:
            xs = [float(p[0]) for p in points]
            ys = [p[1] for p in points]
            r2 = _linear_r2(xs, ys)
            ratio = ys[-1] / ys[0] if ys[0] > 0 else float("inf")
            span = xs[-1] / xs[0]
            flag(r2 >= 0.9, f"control overhead grows linearly in node count (R^2 = {_fmt(r2)})")
            flag(
                ratio <= 1.25 * span,
                f"control overhead ratio over a {_fmt(span)}x size span is {_fmt(ratio)}",
            )
    return lines
