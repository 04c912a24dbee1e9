"""``pipeflow`` command line: gen-synthetic, analyze, select, plan, simulate, run, report."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .analytics import SimConfig, build_report, emit_report, report_from_trace_file, scaling_sweep
from .backends import CostModelParams, SegmentExecutor, make_backend
from .errors import PipelineError, PipeflowError
from .frameio import Frame, load_sequence, write_sequence
from .interpolation import InterpolationRequest, border_consistency, border_positions, interpolate_recursive, smooth_borders
from .motion import FlowConfig
from .scheduler import (
    EDIT,
    INVERT,
    SIMULATED,
    PartialTrace,
    ResourcePool,
    run_schedule,
    validate_trace,
)
from .segmentation import DEFAULT_SEG_LEN, plan_segments, plan_to_tasks
from .selection import (
    DEFAULT_TAU_F,
    DEFAULT_TAU_S,
    SelectionConfig,
    SelectionResult,
    select_frames,
    selection_report,
    transition_metrics,
)
from .synthetic import KINDS, make_clip

log = logging.getLogger("pipeflow")


@dataclass
class PipelineConfig:
    input_dir: str
    output_dir: str
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    seg_len: int = DEFAULT_SEG_LEN
    keyframe_mode: str = "sparse"
    overlap: int = 0
    workers: int = 2
    max_jobs: int | None = None
    mem_threshold: float = 0
    worker_mem: float = 1
    invert_mem: float = 1
    edit_mem: float = 1
    backend: str = "stylize:sepia"
    cost: CostModelParams = field(default_factory=CostModelParams)
    interp: bool = True
    mode: str = SIMULATED
    time_scale: float = 1.0
    prompt: str = ""
    seed: int = 0
    report_dir: str | None = None

    def snapshot(self) -> dict:
        """Config without filesystem paths, so reports compare byte-for-byte."""
        d = asdict(self)
        for k in ("input_dir", "output_dir", "report_dir"):
            d.pop(k)
        return d


@dataclass
class RunResult:
    frames: list[Frame]
    report: object
    violations: list


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except PipelineError:
                raise
            except Exception as exc:
                raise PipelineError(name, exc) from exc
        return inner
    return wrap


def cmd_run(cfg: PipelineConfig) -> RunResult:
    """select -> plan -> schedule over backend -> smooth borders -> fill skipped runs -> write."""
    video = _stage("load")(load_sequence)(cfg.input_dir)
    selection = _stage("select")(select_frames)(video, cfg.selection, cfg.flow)
    plan = _stage("plan")(plan_segments)(selection, cfg.seg_len, cfg.keyframe_mode, cfg.overlap)
    tasks = plan_to_tasks(plan, cfg.cost, {INVERT: cfg.invert_mem, EDIT: cfg.edit_mem})
    pool = ResourcePool.uniform(cfg.workers, cfg.worker_mem, cfg.max_jobs, cfg.mem_threshold)
    backend = _stage("backend")(make_backend)(cfg.backend, cfg.cost)
    executor = SegmentExecutor(backend, plan, video, cfg.prompt)
    try:
        trace = run_schedule(tasks, pool, executor, cfg.mode, cfg.time_scale)
    except PartialTrace as exc:
        raise PipelineError("schedule", exc, {"trace": exc.trace.to_json()}) from exc
    except PipeflowError as exc:
        raise PipelineError("schedule", exc) from exc
    violations = validate_trace(trace, tasks, pool)

    edited = [executor.outputs[s.id] for s in plan.segments]
    if cfg.interp:
        smoothed = _stage("interpolate")(smooth_borders)(edited, cfg.flow)
    else:
        smoothed = [f for seg in edited for f in seg]
    borders = border_consistency(smoothed, border_positions(edited), cfg.flow) if len(edited) > 1 else None

    if cfg.interp:
        by_index = {f.index: f for f in smoothed}
        for t, t_k in selection.skipped_runs:
            req = InterpolationRequest(by_index[t], by_index[t_k], t_k - t - 1)
            for f in _stage("interpolate")(interpolate_recursive)(req, cfg.flow):
                by_index[f.index] = f
        out = [by_index[i].with_index(i, tag="") for i in range(len(video))]
    else:
        out = [f.with_index(i, tag="") for i, f in enumerate(smoothed)]
    _stage("write")(write_sequence)(out, cfg.output_dir, video.manifest.fps)

    inv = [t.est_duration for t in tasks if t.id.stage == INVERT]
    ed = [t.est_duration for t in tasks if t.id.stage == EDIT]
    cost = CostModelParams(N1=len(inv), N2=len(ed), T1=sum(inv) / len(inv), T2=sum(ed) / len(ed), B=len(plan))
    report = build_report(
        trace, tasks, pool, cost, cfg.snapshot(),
        selection=selection_report(selection).to_json(),
        plan=plan.summary(),
        borders=borders.to_json() if borders else {},
        violations=[asdict(v) for v in violations],
    )
    report.config["output_frames"] = len(out)
    emit_report(report, cfg.report_dir or Path(cfg.output_dir) / "report")
    return RunResult(out, report, violations)


# -- argument parsing --------------------------------------------------------------

def _add_flow_args(p):
    p.add_argument("--flow-pyramid-levels", type=int, default=FlowConfig.pyramid_levels)
    p.add_argument("--flow-window", type=int, default=FlowConfig.window)
    p.add_argument("--flow-iterations", type=int, default=FlowConfig.iterations)


def _flow_cfg(a) -> FlowConfig:
    return FlowConfig(a.flow_pyramid_levels, a.flow_window, a.flow_iterations)


def _add_selection_args(p):
    p.add_argument("--tau-s", type=float, default=DEFAULT_TAU_S, help="SSIM threshold (default %(default)s)")
    p.add_argument("--tau-f", type=float, default=DEFAULT_TAU_F,
                   help="mean flow magnitude threshold in px (default %(default)s)")


def _add_plan_args(p):
    p.add_argument("--seg-len", type=int, default=DEFAULT_SEG_LEN, help="selected frames per segment (default %(default)s)")
    p.add_argument("--keyframes", default="sparse", help="sparse, dense or an integer stride (default %(default)s)")
    p.add_argument("--overlap", type=int, default=0, help="border frames borrowed from the previous segment (default %(default)s)")


def _add_cost_args(p):
    d = CostModelParams()
    p.add_argument("--cost-T", type=float, default=d.T)
    p.add_argument("--cost-n", type=float, default=d.n)
    p.add_argument("--cost-d", type=float, default=d.d)
    p.add_argument("--cost-unit", type=float, default=d.unit_cost)


def _add_pool_args(p, workers=2):
    p.add_argument("--workers", type=int, default=workers)
    p.add_argument("--mj", type=int, default=None, help="max concurrent jobs (default: one per worker slot)")
    p.add_argument("--mem", type=float, default=0, help="minimum free memory to admit a task (MEM)")
    p.add_argument("--worker-mem", type=float, default=1, help="memory capacity per worker")
    p.add_argument("--invert-mem", type=float, default=1)
    p.add_argument("--edit-mem", type=float, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipeflow", description=__doc__,
                                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a deterministic synthetic clip")
    p.add_argument("out")
    p.add_argument("--kind", choices=KINDS, default="mixed")
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--channels", type=int, choices=(1, 3), default=3)
    p.add_argument("--speed", type=int, default=1)
    p.add_argument("--fps", default="25")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("analyze", help="per-transition SSIM and mean flow magnitude as CSV")
    p.add_argument("input")
    p.add_argument("--out", default="-")
    _add_flow_args(p)

    p = sub.add_parser("select", help="motion-aware frame selection")
    p.add_argument("input")
    p.add_argument("--out", default="-")
    _add_selection_args(p)
    _add_flow_args(p)

    p = sub.add_parser("plan", help="split a selection into segments")
    p.add_argument("--selection", required=True, help="selection JSON from `pipeflow select`")
    p.add_argument("--out", default="-")
    _add_plan_args(p)
    _add_cost_args(p)

    p = sub.add_parser("simulate", help="simulate the two-stage schedule on the cost model")
    p.add_argument("--segments", type=int, default=32)
    p.add_argument("--t1", type=float, default=10)
    p.add_argument("--t2", type=float, default=10)
    p.add_argument("--slots", type=int, default=1)
    p.add_argument("--dedicated", action="store_true", help="one invert-only and one edit-only worker")
    p.add_argument("--release-interval", type=float, default=0)
    p.add_argument("--scaling", default="", help="comma-separated worker counts for a scaling sweep")
    p.add_argument("--out", default="-")
    _add_pool_args(p, workers=1)

    p = sub.add_parser("run", help="end-to-end: select, plan, schedule, interpolate, report")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--backend", default="stylize:sepia", help="mock or stylize:<posterize|invert-colors|sepia>")
    p.add_argument("--interp", choices=("on", "off"), default="on")
    p.add_argument("--mode", choices=("simulated", "realtime"), default="simulated")
    p.add_argument("--time-scale", type=float, default=1.0, help="realtime seconds per modelled time unit")
    p.add_argument("--prompt", default="")
    p.add_argument("--report-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    _add_selection_args(p)
    _add_flow_args(p)
    _add_plan_args(p)
    _add_pool_args(p)
    _add_cost_args(p)

    p = sub.add_parser("report", help="build report files from a simulate trace")
    p.add_argument("--from", dest="source", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scaling", default="")
    return parser


def _emit(text: str, dest: str) -> None:
    if dest == "-":
        sys.stdout.write(text)
    else:
        Path(dest).write_text(text)


def _counts(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except PipelineError as exc:
        print(f"pipeflow: {exc}", file=sys.stderr)
        return 2
    except PipeflowError as exc:
        print(f"pipeflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "gen-synthetic":
        frames = make_clip(args.kind, args.frames, args.width, args.height, args.seed, args.channels, args.speed)
        m = write_sequence(frames, args.out, args.fps)
        print(f"wrote {m.frame_count} frames to {args.out}")
        return 0

    if cmd == "analyze":
        video = load_sequence(args.input)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "ssim", "mf"])
        for m in transition_metrics(video, _flow_cfg(args)):
            w.writerow([m.frame_pair[1], repr(m.ssim), repr(m.mean_flow_magnitude)])
        _emit(buf.getvalue(), args.out)
        return 0

    if cmd == "select":
        video = load_sequence(args.input)
        result = select_frames(video, SelectionConfig(args.tau_s, args.tau_f), _flow_cfg(args))
        _emit(json.dumps(result.to_json(), sort_keys=True, indent=2) + "\n", args.out)
        r = selection_report(result)
        print(f"kept {r.kept}/{r.frame_count} frames (skip ratio {r.skip_ratio:.3f})", file=sys.stderr)
        return 0

    if cmd == "plan":
        selection = SelectionResult.from_json(json.loads(Path(args.selection).read_text()))
        plan = plan_segments(selection, args.seg_len, args.keyframes, args.overlap)
        cost = CostModelParams(T=args.cost_T, n=args.cost_n, d=args.cost_d, unit_cost=args.cost_unit)
        obj = plan.to_json()
        obj["tasks"] = [t.to_json() for t in plan_to_tasks(plan, cost)]
        _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", args.out)
        return 0

    if cmd == "simulate":
        sim = SimConfig(segments=args.segments, t1=args.t1, t2=args.t2, invert_mem=args.invert_mem,
                        edit_mem=args.edit_mem, worker_mem=args.worker_mem, workers=args.workers,
                        slots=args.slots, max_jobs=args.mj, mem_threshold=args.mem,
                        release_interval=args.release_interval, dedicated=args.dedicated)
        tasks, pool = sim.tasks(), sim.pool()
        trace = run_schedule(tasks, pool)
        violations = validate_trace(trace, tasks, pool)
        obj = {**trace.to_json(), "config": asdict(sim), "pool": pool.to_json(),
               "tasks": [t.to_json() for t in tasks]}
        if args.scaling:
            obj["scaling"] = [asdict(r) for r in scaling_sweep(sim, _counts(args.scaling))]
        _emit(json.dumps(obj, sort_keys=True, indent=2) + "\n", args.out)
        serial = sum(t.est_duration for t in tasks)
        print(f"makespan {trace.makespan} (serial {serial}, speedup {serial / trace.makespan:.3f}); "
              f"{len(violations)} violations", file=sys.stderr)
        return 0 if not violations else 1

    if cmd == "report":
        report = report_from_trace_file(args.source, _counts(args.scaling))
        emit_report(report, args.out)
        return 0 if not report.violations else 1

    if cmd == "run":
        cfg = PipelineConfig(
            input_dir=args.input, output_dir=args.output,
            selection=SelectionConfig(args.tau_s, args.tau_f), flow=_flow_cfg(args),
            seg_len=args.seg_len, keyframe_mode=args.keyframes, overlap=args.overlap,
            workers=args.workers, max_jobs=args.mj, mem_threshold=args.mem, worker_mem=args.worker_mem,
            invert_mem=args.invert_mem, edit_mem=args.edit_mem, backend=args.backend,
            cost=CostModelParams(T=args.cost_T, n=args.cost_n, d=args.cost_d, unit_cost=args.cost_unit),
            interp=args.interp == "on", mode=args.mode, time_scale=args.time_scale, prompt=args.prompt,
            seed=args.seed, report_dir=args.report_dir,
        )
        try:
            result = cmd_run(cfg)
        except PipelineError as exc:
            if exc.partial_report is not None:
                rdir = Path(cfg.report_dir or Path(cfg.output_dir) / "report")
                rdir.mkdir(parents=True, exist_ok=True)
                (rdir / "partial_report.json").write_text(
                    json.dumps({"stage": exc.stage, "error": str(exc.cause), **exc.partial_report},
                               sort_keys=True, indent=2) + "\n")
            raise
        print(f"wrote {len(result.frames)} frames; makespan {result.report.makespan:.6g}; "
              f"{len(result.violations)} violations", file=sys.stderr)
        return 0 if not result.violations else 1
    raise AssertionError(cmd)


if __name__ == "__main__":
    sys.exit(main())
