"""Command-line driver: ``evacsim validate|run|batch --config FILE``.

Exit codes:
    0  success
    1  validation findings (validate only)
    2  usage error
    3  configuration error (bad or missing config or referenced file)
    4  input error (floor plan, fire history or distribution library rejected)
    5  simulation error
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .engine import (EngineConfig, ExitEvent, Scene, SimulationOutcome, export_frames,
                     run_simulation)
from .fireenv import FireHistory, FireHistoryError, ingest_history
from .geometry import FloorPlan, FloorPlanError, parse_floor_plan, resolve_vents
from .navmesh import NavMeshError, NoRouteError, attach_point, detach_point, shortest_route
from .results import fn_csv, rset_csv, summarize
from .sampler import Library, SamplerError, default_library, load_library, sample_scenario

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_CONFIG, EXIT_INPUT, EXIT_SIM = 0, 1, 2, 3, 4, 5

log = logging.getLogger("evacsim")


class ConfigError(Exception):
    pass


@dataclass
class ProjectConfig:
    floor_plan: Path
    fire_history: Path
    fire_origin: str
    distributions: Path | None = None
    preset: str | None = None
    floor: str | None = None
    engine: dict = field(default_factory=dict)
    n: int = 1
    base_seed: int = 0
    workers: int = 1
    output: Path = Path("out")
    wall_thickness: float = 0.2
    radius: float = 0.25
    exit_events: list[dict] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> "ProjectConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        allowed = set(cls.__dataclass_fields__)
        bad = sorted(set(raw) - allowed)
        if bad:
            raise ConfigError(f"unknown config keys {bad}")
        for key in ("floor_plan", "fire_history", "fire_origin"):
            if key not in raw:
                raise ConfigError(f"config lacks {key!r}")
        base = path.parent

        def rel(p):
            return None if p is None else (base / p if not Path(p).is_absolute() else Path(p))

        cfg = cls(**{**raw,
                     "floor_plan": rel(raw["floor_plan"]),
                     "fire_history": rel(raw["fire_history"]),
                     "distributions": rel(raw.get("distributions")),
                     "output": rel(raw.get("output", "out"))})
        if cfg.n < 1:
            raise ConfigError("n must be >= 1")
        for p in (cfg.floor_plan, cfg.fire_history, cfg.distributions):
            if p is not None and not p.is_file():
                raise ConfigError(f"referenced file {p} not found")
        return cfg

    def engine_config(self, **overrides) -> EngineConfig:
        try:
            return EngineConfig.from_dict({**self.engine, **overrides})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad engine settings: {exc}") from exc

    def events(self) -> list[ExitEvent]:
        return [ExitEvent(float(e["time"]), str(e["exit_id"])) for e in self.exit_events]


@dataclass
class Context:
    plan: FloorPlan
    scene: Scene
    history: FireHistory
    library: Library


def load_inputs(cfg: ProjectConfig) -> Context:
    plan = parse_floor_plan(cfg.floor_plan.read_text(encoding="utf-8"), cfg.floor)
    history = ingest_history(cfg.fire_history)
    library = load_library(cfg.distributions, cfg.preset) if cfg.distributions else default_library()
    if cfg.fire_origin not in {c.id for c in plan.compartments}:
        raise ConfigError(f"fire origin {cfg.fire_origin!r} is not a compartment of the plan")
    return Context(plan, Scene.build(plan, cfg.wall_thickness), history, library)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def validation_findings(plan: FloorPlan, wall_thickness: float = 0.2) -> tuple[list[str], list[str]]:
    """(errors, warnings) for a floor plan."""
    errors: list[str] = []
    warnings: list[str] = []
    vents, problems = resolve_vents(plan)
    by_id = {v.id: v for v in vents}
    for msg in problems:
        vid = msg.split(":")[0]
        (warnings if by_id[vid].kind == "W" else errors).append(msg)
    for c in plan.compartments:
        if not any(c.id in v.compartments for v in vents if v.kind in ("D", "HOLE")):
            errors.append(f"{c.id}: no vent on compartment")
    if errors:
        return errors, warnings
    try:
        scene = Scene.build(plan, wall_thickness)
    except (FloorPlanError, NavMeshError) as exc:
        return [f"geometry: {exc}"], warnings
    if not scene.graph.exits:
        return ["plan has no exit"], warnings
    h = wall_thickness / 2
    for c in plan.compartments:
        x0, y0, x1, y1 = c.box.footprint
        probe = (0.5 * (x0 + x1), 0.5 * (y0 + y1))
        if scene.graph.locate(probe) is None:
            probe = (x0 + h + 1e-3, y0 + h + 1e-3)
        try:
            node = attach_point(scene.graph, probe)
        except NavMeshError:
            errors.append(f"{c.id}: not on the navigation mesh")
            continue
        try:
            shortest_route(scene.graph, node)
        except NoRouteError:
            errors.append(f"{c.id}: no path to any exit")
        finally:
            detach_point(scene.graph, node)
    return errors, warnings


def cmd_validate(cfg: ProjectConfig) -> int:
    plan = parse_floor_plan(cfg.floor_plan.read_text(encoding="utf-8"), cfg.floor)
    ingest_history(cfg.fire_history)
    if cfg.distributions:
        load_library(cfg.distributions, cfg.preset)
    errors, warnings = validation_findings(plan, cfg.wall_thickness)
    if cfg.fire_origin not in {c.id for c in plan.compartments}:
        errors.append(f"{cfg.fire_origin}: fire origin is not a compartment")
    for w in warnings:
        print(f"warning: {w}")
    for e in errors:
        print(f"error: {e}")
    return EXIT_FINDINGS if errors else EXIT_OK


# ---------------------------------------------------------------------------
# run / batch
# ---------------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def simulate(ctx: Context, cfg: ProjectConfig, seed: int, frames: bool):
    sample = sample_scenario(seed, ctx.plan, ctx.library, cfg.fire_origin, cfg.radius,
                             cfg.wall_thickness)
    outcome = run_simulation(ctx.scene, ctx.history, sample,
                             cfg.engine_config(retain_frames=frames), cfg.events())
    return sample, outcome


def cmd_run(cfg: ProjectConfig, seed: int, out: Path, frames: bool = True) -> int:
    ctx = load_inputs(cfg)
    sample, outcome = simulate(ctx, cfg, seed, frames)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"sample_{seed}.json").write_text(_dump(sample.to_json()) + "\n", encoding="utf-8")
    (out / f"outcome_{seed}.json").write_text(_dump(outcome.to_json()) + "\n", encoding="utf-8")
    if frames:
        with open(out / f"frames_{seed}.jsonl", "w", encoding="utf-8") as fh:
            fh.writelines(export_frames(outcome))
    for w in outcome.warnings:
        log.warning("seed %d: %s", seed, w)
    return EXIT_OK


_WORKER: tuple[Context, ProjectConfig] | None = None


def _init_worker(cfg: ProjectConfig) -> None:
    global _WORKER
    _WORKER = (load_inputs(cfg), cfg)


def _batch_one(args: tuple[int, bool]):
    seed, frames = args
    ctx, cfg = _WORKER
    try:
        sample, outcome = simulate(ctx, cfg, seed, frames)
    except (SamplerError, NavMeshError, ValueError) as exc:
        return seed, None, None, None, f"{type(exc).__name__}: {exc}"
    fr = "".join(export_frames(outcome)) if frames else None
    return seed, sample.to_json(), outcome.to_json(), fr, None


def run_batch(cfg: ProjectConfig, n: int, base_seed: int, workers: int, out: Path,
              frames: bool = False, progress_every: int = 10) -> int:
    seeds = list(range(base_seed, base_seed + n))
    load_inputs(cfg)  # fail fast on bad inputs before spawning workers
    jobs = [(s, frames) for s in seeds]
    results = []
    if workers <= 1:
        _init_worker(cfg)
        it = map(_batch_one, jobs)
        results = _collect(it, n, progress_every)
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(cfg,)) as pool:
            results = _collect(pool.map(_batch_one, jobs), n, progress_every)
    results.sort(key=lambda r: r[0])
    out.mkdir(parents=True, exist_ok=True)
    outcomes = []
    with open(out / "results.jsonl", "w", encoding="utf-8") as res, \
            open(out / "ledger.jsonl", "w", encoding="utf-8") as led, \
            open(out / "failures.jsonl", "w", encoding="utf-8") as fail:
        for seed, sample, outcome, fr, err in results:
            if err is not None:
                log.warning("seed %d failed: %s", seed, err)
                fail.write(_dump({"seed": seed, "error": err}) + "\n")
                continue
            led.write(_dump({"seed": seed, "sample": sample}) + "\n")
            res.write(_dump(outcome) + "\n")
            outcomes.append(SimulationOutcome.from_json(outcome))
            if fr is not None:
                (out / f"frames_{seed}.jsonl").write_text(fr, encoding="utf-8")
    if not outcomes:
        log.error("every simulation failed")
        return EXIT_SIM
    summary = summarize(outcomes)
    (out / "summary.json").write_text(_dump(summary.to_json()) + "\n", encoding="utf-8")
    (out / "fn.csv").write_text(fn_csv(summary), encoding="utf-8")
    (out / "rset.csv").write_text(rset_csv(outcomes), encoding="utf-8")
    return EXIT_OK


def _collect(it, n, every):
    out = []
    for k, r in enumerate(it, start=1):
        out.append(r)
        if every and (k % every == 0 or k == n):
            print(f"progress {k}/{n}", file=sys.stderr, flush=True)
    return out


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evacsim", description="Stochastic evacuation simulator.")
    sub = p.add_subparsers(dest="command", required=True)
    v = sub.add_parser("validate", help="static checks of the project inputs")
    v.add_argument("--config", required=True)
    r = sub.add_parser("run", help="one seeded simulation with frames")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", default=None)
    r.add_argument("--no-frames", action="store_true")
    b = sub.add_parser("batch", help="many seeded simulations and a summary")
    b.add_argument("--config", required=True)
    b.add_argument("-n", type=int, default=None)
    b.add_argument("--seed", type=int, default=None, help="base seed")
    b.add_argument("--workers", type=int, default=None)
    b.add_argument("--out", default=None)
    b.add_argument("--frames", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = ProjectConfig.load(args.config)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            out = Path(args.out) if args.out else cfg.output
            return cmd_run(cfg, args.seed, out, frames=not args.no_frames)
        n = args.n if args.n is not None else cfg.n
        if n < 1:
            raise ConfigError("n must be >= 1")
        return run_batch(cfg, n, args.seed if args.seed is not None else cfg.base_seed,
                         args.workers if args.workers is not None else cfg.workers,
                         Path(args.out) if args.out else cfg.output, frames=args.frames)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloorPlanError, FireHistoryError, SamplerError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NavMeshError, ValueError) as exc:
        print(f"simulation error: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
