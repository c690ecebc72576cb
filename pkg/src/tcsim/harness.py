"""Scenario runner: wires profiles, scenarios, channels and statistics into
reproducible experiments and writes the report plus per-channel CSVs.

Cells run sequentially in a fixed order and every random stream is derived
from the master seed, so identical config text yields byte-identical output.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

import tcsim
from tcsim.channels import (ChannelSpec, SampleSet, run_channel,
                            run_llc_side_channel)
from tcsim.config import RunConfig
from tcsim.kernel import Simulator
from tcsim.microarch import colour_count
from tcsim.profiles import PlatformProfile, get_profile
from tcsim.scenarios import RECEIVER, SENDER, build_scenario
from tcsim.stats import channel_matrix, leak_verdict, report_record

SWITCH_WORKLOADS = ("idle", "l1d", "l1i", "l2", "llc")


def cell_seed(master: int, channel: str, scenario: str) -> int:
    digest = hashlib.sha256(f"{master}:{channel}:{scenario}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def noise_sigma_for(profile: PlatformProfile, channel: str, pct: float) -> float:
    if pct <= 0:
        return 0.0
    resource = channel if channel in profile.geometries else \
        ("btb" if channel in ("btb", "bhb") else profile.partitioned_cache)
    return pct / 100.0 * profile.latency.params(resource).hit_cycles


def _build_kwargs(cfg: RunConfig) -> dict:
    return dict(frames=cfg.frames, colour_split=cfg.colour_split,
                timeslice_cycles=cfg.timeslice_cycles, pad_cycles=cfg.pad_cycles,
                irq_margin_pct=cfg.irq_margin_pct, irq_owners=cfg.irq_owners)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def run_scenario(cfg: RunConfig, outdir) -> dict:
    """Run every requested channel under every requested scenario, measure
    leakage, and write report.json plus per-cell CSVs under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    profile = get_profile(cfg.profile)
    report = {
        "tool": "tcsim",
        "version": tcsim.__version__,
        "config_sha256": hashlib.sha256(cfg.raw_text.encode()).hexdigest(),
        "seed": cfg.seed,
        "profile": profile_summary(profile),
        "config": cfg.echo(),
        "channels": {},
    }
    kwargs = _build_kwargs(cfg)
    for channel in cfg.channels:
        report["channels"][channel] = {}
        for scenario in cfg.scenarios:
            if channel == "llc_side" and scenario == "full_flush":
                continue  # concurrent cross-core access; flushing is meaningless
            cell = _run_cell(profile, cfg, channel, scenario, outdir, kwargs)
            report["channels"][channel][scenario] = cell
    if cfg.switch_cost_table:
        report["switch_cost_table"] = {
            scenario: measure_switch_costs(profile, scenario, **kwargs)
            for scenario in cfg.scenarios}
        report["flush_cost_table"] = flush_cost_table(profile)
    if cfg.colour_overhead:
        ws = cfg.overhead_working_set_kib * 1024
        report["colour_overhead"] = [
            {"share": share, "working_set_bytes": ws,
             "slowdown": measure_colour_overhead(profile, ws, share)}
            for share in cfg.overhead_shares]
    report = _jsonable(report)
    report_path = outdir / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report


def _run_cell(profile, cfg: RunConfig, channel: str, scenario: str,
              outdir: Path, build_kwargs: dict) -> dict:
    seed = cell_seed(cfg.seed, channel, scenario)
    if channel == "llc_side":
        spec = ChannelSpec("llc_side_channel", scenario, iterations=1,
                           seed=cfg.llc_key_seed)
        result = run_llc_side_channel(profile, spec, key_bits=cfg.llc_key_bits,
                                      **build_kwargs)
        result.trace_to_csv(outdir / f"llc_side_{scenario}_trace.csv")
        return {
            "recovery_accuracy": result.accuracy,
            "true_key": "".join(str(b) for b in result.true_key),
            "recovered_key": "".join(str(b) for b in result.recovered_key),
            "hot_set": result.hot_set,
            "trace_csv": f"llc_side_{scenario}_trace.csv",
            "metadata": result.metadata,
        }
    sigma = noise_sigma_for(profile, channel, cfg.noise_sigma_pct)
    alphabet = ()
    if channel in ("l1d", "l1i", "l2", "tlb", "btb"):
        from tcsim.channels import default_alphabet
        alphabet = default_alphabet(channel, cfg.symbols)
    spec = ChannelSpec(channel, scenario, iterations=cfg.iterations, seed=seed,
                       resource=channel if channel in
                       ("l1d", "l1i", "l2", "tlb", "btb", "bhb") else None,
                       input_alphabet=alphabet, noise_sigma=sigma,
                       warmup=cfg.warmup)
    samples = run_channel(profile, spec, **build_kwargs)
    csv_name = f"{channel}_{scenario}.csv"
    samples.to_csv(outdir / csv_name)
    cell = {
        "samples_csv": csv_name,
        "metadata": samples.metadata,
        **_measure(samples.inputs, samples.outputs, cfg, seed),
    }
    matrix_name = f"{channel}_{scenario}_matrix.csv"
    _write_matrix(samples.inputs, samples.outputs, cfg.matrix_bins, outdir / matrix_name)
    cell["matrix_csv"] = matrix_name
    for name, extra in samples.extra.items():
        extra_csv = f"{channel}_{scenario}_{name}.csv"
        SampleSet(samples.inputs, extra).to_csv(outdir / extra_csv)
        cell[name] = {"samples_csv": extra_csv,
                      **_measure(samples.inputs, extra, cfg, seed)}
    return cell


def _measure(inputs, outputs, cfg: RunConfig, seed: int) -> dict:
    verdict = leak_verdict(inputs, outputs, shuffles=cfg.shuffles, seed=seed + 1,
                           grid_points=cfg.grid_points, eps=cfg.kde_eps)
    return report_record(verdict)


def _write_matrix(inputs, outputs, bins: int, path: Path):
    symbols, edges, matrix = channel_matrix(inputs, outputs, bins)
    with open(path, "w") as fh:
        header = ["input"] + [repr(float(e)) for e in edges[:-1]]
        fh.write(",".join(header) + "\n")
        for sym, row in zip(symbols, matrix):
            fh.write(",".join([str(sym)] + [repr(float(v)) for v in row]) + "\n")


def profile_summary(profile: PlatformProfile) -> dict:
    out = {"name": profile.name, "page_bytes": profile.page_bytes,
           "partitioned_cache": profile.partitioned_cache,
           "line_bytes": profile.line_bytes, "caches": {}}
    for name, geo in profile.geometries.items():
        out["caches"][name] = {
            "size_bytes": geo.size_bytes, "ways": geo.ways,
            "line_bytes": geo.line_bytes, "sets": geo.sets,
            "indexing": geo.indexing,
            "colours": colour_count(geo, profile.page_bytes)
            if geo.indexing == "physical" else None,
        }
    return out


# -- switch-cost table ------------------------------------------------------

def _switch_workload(system, sim: Simulator, workload: str):
    """One slice of the named receiver workload (a window probe)."""
    from tcsim.channels import (WINDOW_SETS, _physical_window, _probe,
                                _virtual_window, _first_colour)
    if workload == "idle":
        return lambda: None
    name = "l2" if (workload == "llc" and "llc" not in sim.machine.caches) else workload
    cache = sim.machine.cache(name)
    if cache.geometry.indexing == "virtual":
        window = _virtual_window(sim, RECEIVER, cache, WINDOW_SETS)
    else:
        window = _physical_window(sim, RECEIVER, cache, _first_colour(sim, RECEIVER))
    kind = "ifetch" if name == "l1i" else "read"
    return lambda: _probe(cache, RECEIVER, window, kind)


def measure_switch_costs(profile: PlatformProfile, scenario: str,
                         rounds: int = 6, **build_kwargs) -> dict:
    """Cost of switching away from a domain running each receiver workload to
    an idle domain, per scenario. Reports the steady-state (last round)."""
    out = {}
    for workload in SWITCH_WORKLOADS:
        if workload == "llc" and "llc" not in profile.geometries:
            continue
        system = build_scenario(profile, scenario, **build_kwargs)
        sim = system.sim
        run = _switch_workload(system, sim, workload)
        trace = None
        for _ in range(rounds):
            sim.domain_switch(RECEIVER)
            run()
            trace = sim.domain_switch(SENDER)
        out[workload] = trace.total_elapsed
    return out


def flush_cost_table(profile: PlatformProfile) -> dict:
    """Worst-case direct flush cost per resource (all lines dirty where the
    resource can hold dirty data)."""
    machine = profile.build_machine()
    return {name: machine.flush_worst_case(name) for name in machine.resource_ids()}


# -- colouring overhead -------------------------------------------------------

def measure_colour_overhead(profile: PlatformProfile, working_set_bytes: int,
                            share: float, passes: int = 4) -> float:
    """Slowdown of a streaming read workload when confined to a share of the
    partitioned cache's colours: cycles(share) / cycles(all colours) - 1."""
    if not (0 < share <= 1):
        raise ValueError("share must be in (0, 1]")
    geometry = profile.geometries[profile.partitioned_cache]
    colours = colour_count(geometry, profile.page_bytes)
    allowed = max(1, math.floor(colours * share))
    full = _stream_cycles(profile, working_set_bytes, colours, passes)
    restricted = _stream_cycles(profile, working_set_bytes, allowed, passes)
    return restricted / full - 1.0


def _stream_cycles(profile: PlatformProfile, working_set_bytes: int,
                   allowed_colours: int, passes: int) -> int:
    machine = profile.build_machine()
    geometry = profile.geometries[profile.partitioned_cache]
    colours = colour_count(geometry, profile.page_bytes)
    page = profile.page_bytes
    n_pages = math.ceil(working_set_bytes / page)
    # round-robin page frames over the allowed colours
    frames = [(i // allowed_colours) * colours + (i % allowed_colours)
              for i in range(n_pages)]
    line = profile.line_bytes
    per = page // line
    addrs = [f * page + j * line for f in frames for j in range(per)]
    total = 0
    for p in range(passes):
        cycles = sum(machine.data_access("stream", a, a) for a in addrs)
        if p > 0:  # skip the cold pass
            total += cycles
    return total
