"""Batch command line: ``ctxskill {train,sweep,analyze,replay}``.

Global flags (``--seed``, ``--workers``, ``--out``) may appear before or
after the subcommand.  The default worker count comes from the
``CTXSKILL_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

from . import analysis, generalize, io, trainer
from .domains import get_domain
from .envs import flappy, lander, lane
from .net import Genome, StructuralError
from .rollout import Runner

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_SAFE = 3

SWEEP_PAIRS = (("CS", "S"), ("CS", "C"), ("C", "S"))
TRAJ_COLUMNS = {"flappy": flappy.TRAJ_COLUMNS, "lander": lander.TRAJ_COLUMNS, "lane": lane.TRAJ_COLUMNS}
INT_COLUMNS = {"tick", "action", "action_up", "action_fwd", "pipes_passed", "hit_ticks", "boundary_ticks"}

log = logging.getLogger("ctxskill")


class UsageError(ValueError):
    """Bad command-line input; reported with exit code 2."""


def _load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{p}: malformed JSON ({e})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{p}: expected a JSON object")
    return doc




def default_workers() -> int | None:
    """Worker count from ``CTXSKILL_WORKERS``; None leaves the config value in charge."""
    raw = os.environ.get("CTXSKILL_WORKERS", "").strip()
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"CTXSKILL_WORKERS must be an integer, got {raw!r}") from None


def load_domain_genome(path, domain: str | None = None):
    """``(Genome, ArchSpec, domain_name)`` with the file's architecture checked against the domain."""
    genome, arch, doc = io.read_genome(path)
    name = doc.get("domain", domain)
    if name is None:
        raise UsageError(f"{path}: genome file names no domain")
    if domain is not None and name != domain:
        raise UsageError(f"{path}: genome is for {name}, expected {domain}")
    dom = get_domain(name)
    if (arch.sensory_dim, arch.action_dim) != (dom.sensory_dim, dom.action_dim):
        raise StructuralError(f"{path}: network dimensions do not match the {name} domain")
    return genome, arch, name


# ---------------------------------------------------------------- train


def cmd_train(config_path, out_dir, seed=None, workers=None) -> int:
    doc = _load_json(config_path)
    threshold = doc.pop("safety_threshold", None)
    if seed is not None:
        doc["seed"] = seed
    if workers is not None:
        doc["workers"] = workers
    config = trainer.TrainConfig.from_dict(doc)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.RunManifest("train", {**config.to_dict(), "safety_threshold": threshold}, config.seed)
    manifest.doc["config"].pop("workers")

    t0 = time.perf_counter()
    archive, glog = trainer.run_evolution(config)
    elapsed = time.perf_counter() - t0
    dom = config.dom
    arch = dom.arch(config.kind)

    p = io.write_csv(out / "generations.csv", ("gen", "ind", "f0", "f1", "rank", "crowding"), glog.rows())
    manifest.add_output(p, out)
    p = io.write_csv(
        out / "generation_summary.csv",
        ("gen", "front0_size", "best_f0", "best_f1", "evaluations"),
        ((e.gen, e.front0_size, e.best[0], e.best[1], e.evaluations) for e in glog.entries),
    )
    manifest.add_output(p, out)

    adir = out / "archive"
    adir.mkdir(exist_ok=True)
    rows = []
    for i in range(len(archive)):
        name = f"genome_{i:03d}.json"
        g = Genome(archive.genomes[i], archive.bounds)
        f0, f1 = archive.objectives[i]
        manifest.add_output(io.write_genome(adir / name, g, arch, config.domain,
                                            {"objectives": [float(f0), float(f1)]}), out)
        rows.append((i, f0, f1, name))
    manifest.add_output(io.write_csv(adir / "front.csv", ("index", "f0", "f1", "file"), rows), out)

    extra = {
        "generations_run": len(glog.entries),
        "stopped_early": glog.stopped_early,
        "total_evaluations": glog.total_evaluations,
    }
    code = EXIT_OK
    try:
        idx = trainer.select_final(archive, config.stop, threshold)
    except trainer.NoSafeIndividual as e:
        print(f"ctxskill train: {e}", file=sys.stderr)
        extra["final_index"] = None
        code = EXIT_NO_SAFE
    else:
        g = Genome(archive.genomes[idx], archive.bounds)
        f0, f1 = archive.objectives[idx]
        p = io.write_genome(out / "final_genome.json", g, arch, config.domain,
                            {"objectives": [float(f0), float(f1)], "archive_index": idx})
        manifest.add_output(p, out)
        extra["final_index"] = idx
    manifest.doc["wall_clock"]["seconds"] = round(elapsed, 3)
    manifest.finish(out, **extra)
    return code


# ---------------------------------------------------------------- sweep


def _parse_slots(specs):
    slots = {}
    for s in specs:
        if "=" not in s:
            raise UsageError(f"--genome expects LABEL=PATH, got {s!r}")
        label, path = s.split("=", 1)
        if label in slots:
            raise UsageError(f"slot {label} given twice")
        slots[label] = path
    if not slots:
        raise UsageError("at least one --genome LABEL=PATH is required")
    return slots


def cmd_sweep(genome_specs, config_path, out_dir, seed=None, workers=None) -> int:
    doc = _load_json(config_path)
    if seed is not None:
        doc["seed"] = seed
    if workers is not None:
        doc["workers"] = workers
    config = generalize.SweepConfig.from_dict(doc)
    slot_paths = _parse_slots(genome_specs)
    nets = {}
    for label, path in slot_paths.items():
        g, arch, _ = load_domain_genome(path, config.domain)
        nets[label] = (arch.kind, g)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = config.to_dict()
    cfg.pop("workers")
    manifest = io.RunManifest("sweep", {**cfg, "genomes": slot_paths}, config.seed)

    t0 = time.perf_counter()
    grid = generalize.build_grid(config)
    records = generalize.sweep(nets, grid, config)
    dom = get_domain(config.domain)
    labels = list(nets)

    header = [f"i_{n}" for n in dom.param_names] + list(dom.param_names)
    for label in labels:
        header += [f"f0_{label}", f"f1_{label}"]
    rows = []
    for r in records:
        row = list(r.coords) + list(r.params)
        for label in labels:
            row += list(r.metrics[label])
        rows.append(row)
    manifest.add_output(io.write_csv(out / "sweep.csv", header, rows), out)

    summary = {
        "domain": config.domain,
        "grid_points": len(grid),
        "episodes_per_network": len(grid) * config.samples,
        "means": {label: dict(zip(("f0", "f1"), generalize.metric_means(records, label))) for label in labels},
        "histograms": [],
    }
    for a, b in SWEEP_PAIRS:
        if a not in nets or b not in nets:
            continue
        for k, metric in enumerate(("f0", "f1")):
            h = generalize.diff_histogram(records, metric, (a, b), config.n_bins, dom.senses[k])
            p = io.write_csv(out / f"hist_{a}-{b}_{metric}.csv", ("bin_lo", "bin_hi", "count"), h.rows())
            manifest.add_output(p, out)
            summary["histograms"].append({**h.summary, "file": p.name})
    manifest.add_output(io.write_json(out / "summary.json", summary), out)
    manifest.doc["wall_clock"]["seconds"] = round(time.perf_counter() - t0, 3)
    manifest.finish(out)
    return EXIT_OK


# ---------------------------------------------------------------- analyze / replay


def _parse_scenario(text, domain):
    if text is None:
        return dict(analysis.FLAPPY_SCENARIO) if domain == "flappy" else {}
    p = Path(text)
    doc = _load_json(p) if p.suffix == ".json" or p.is_file() else json.loads(text)
    if not isinstance(doc, dict):
        raise UsageError("scenario must be a JSON object of parameter overrides")
    return doc


def _write_trace(path, trace: analysis.ModuleTrace):
    header = ["tick", "module"] + [f"dim{k}" for k in range(trace.dim)]
    rows = ([t, trace.module] + list(trace.outputs[t]) for t in range(len(trace)))
    return io.write_csv(path, header, rows)


def cmd_analyze(genome_paths, scenario, out_dir, seed=0) -> int:
    seed = 0 if seed is None else seed
    loaded = []
    domain = None
    for path in genome_paths:
        g, arch, name = load_domain_genome(path, domain)
        domain = name
        loaded.append((path, g, arch))
    scen = _parse_scenario(scenario, domain)
    params = analysis.scenario_params(domain, scen)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.RunManifest("analyze", {"genomes": list(genome_paths), "domain": domain,
                                          "scenario": dict(zip(get_domain(domain).param_names, params))}, seed)
    rows = []
    seen = {}
    for path, g, arch in loaded:
        name = arch.kind
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}_{seen[name]}"
        nominal, _ = analysis.record_module_outputs(g, arch.kind, domain, get_domain(domain).base_params, seed)
        shifted, _ = analysis.record_module_outputs(g, arch.kind, domain, params, seed, "generalization")
        for module in ("context", "skill"):
            if module not in nominal:
                continue
            for tr in (nominal[module], shifted[module]):
                manifest.add_output(_write_trace(out / f"trace_{name}_{module}_{tr.label}.csv", tr), out)
            for k, (msd, std) in enumerate(analysis.trace_diff_stats(nominal[module], shifted[module])):
                rows.append((name, module, k + 1, msd, std))
    manifest.add_output(io.write_csv(out / "stats.csv", ("network", "module", "pc", "msd", "std"), rows), out)
    manifest.finish(out)
    return EXIT_OK


def _parse_params(text, domain):
    dom = get_domain(domain)
    if text is None:
        return tuple(dom.base_params)
    vals = [float(v) for v in text.split(",")]
    if len(vals) != dom.n_params:
        raise UsageError(f"{domain} takes {dom.n_params} parameters ({', '.join(dom.param_names)})")
    return tuple(vals)


def cmd_replay(genome_path, params, out_dir, seed=0, track="eval") -> int:
    seed = 0 if seed is None else seed
    g, arch, domain = load_domain_genome(genome_path)
    values = _parse_params(params, domain)
    runner = Runner(domain, arch.kind, g, track)
    h, c = runner.new_memory()
    rec = runner.episode(values, seed, h, c, record=True)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.RunManifest("replay", {"genome": str(genome_path), "domain": domain,
                                         "params": list(values), "track": track}, seed)
    cols = TRAJ_COLUMNS[domain]
    as_int = [c in INT_COLUMNS for c in cols]
    rows = ([int(v) if k else float(v) for v, k in zip(r, as_int)] for r in rec.trajectory)
    manifest.add_output(io.write_csv(out / "trajectory.csv", cols, rows), out)
    manifest.finish(out, f0=rec.f0, f1=rec.f1, ticks=rec.ticks)
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides config)")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="evaluation processes (default: $CTXSKILL_WORKERS or 1)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="ctxskill", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[common], help="run multiobjective evolution from a JSON config")
    t.add_argument("config")

    s = sub.add_parser("sweep", parents=[common], help="generalization sweep and difference histograms")
    s.add_argument("config")
    s.add_argument("--genome", action="append", default=[], metavar="LABEL=PATH",
                   help="network for a slot (CS, C, S); repeatable")

    a = sub.add_parser("analyze", parents=[common], help="module-output difference statistics")
    a.add_argument("genomes", nargs="+")
    a.add_argument("--scenario", help="JSON file or inline JSON object of parameter overrides")

    r = sub.add_parser("replay", parents=[common], help="dump the trajectory of one episode")
    r.add_argument("genome")
    r.add_argument("--params", help="comma-separated parameter values (default: base values)")
    r.add_argument("--track", default="eval", help="lane track name or JSON path")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    seed = getattr(args, "seed", None)
    args.out = getattr(args, "out", "out")
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        workers = getattr(args, "workers", None)
        if workers is None:
            workers = default_workers()
        if args.command == "train":
            return cmd_train(args.config, args.out, seed, workers)
        if args.command == "sweep":
            return cmd_sweep(args.genome, args.config, args.out, seed, workers)
        if args.command == "analyze":
            return cmd_analyze(args.genomes, args.scenario, args.out, seed)
        return cmd_replay(args.genome, args.params, args.out, seed, args.track)
    except (UsageError, trainer.ConfigError, StructuralError, FileNotFoundError, KeyError, ValueError,
            json.JSONDecodeError) as e:
        print(f"ctxskill {args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except trainer.NoSafeIndividual as e:
        print(f"ctxskill {args.command}: {e}", file=sys.stderr)
        return EXIT_NO_SAFE


if __name__ == "__main__":
    sys.exit(main())
