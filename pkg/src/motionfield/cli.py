"""Command-line interface for motionfield.

Subcommands generate data, train and evaluate motion fields, run guided mesh
alignment, inspect checkpoints and list experiment presets.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import NoReturn

from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn
from rich.table import Table

from motionfield import __version__
from motionfield.config import (
    ALIGNMENT_LAYERS,
    DEFAULT_HIDDEN,
    DEFAULT_ITERS,
    DEFAULT_LAYERS,
    DEFAULT_LR,
    LossWeights,
    MotionKind,
    RegMode,
    SirenArch,
    TrainConfig,
    Variant,
)
from motionfield.core.api import (
    VARIANT_ALIASES,
    build_model,
    get_preset,
    list_presets,
    model_info,
    parse_variant,
    search_presets,
)
from motionfield.core.training import (
    Metrics,
    ProgressFn,
    TrainReport,
    evaluate_alignment,
    evaluate_trajectories,
    fit_alignment,
    fit_trajectories,
)
from motionfield.data.synth import (
    CLIP_LENGTH,
    CLIP_STEP,
    CLIP_TRAIN_FRACTION,
    extract_clips,
    gen_alignment_sequence,
    gen_elemental,
    gen_image2d,
)
from motionfield.data.trajio import TrajectorySet, load_trajectories, save_trajectories
from motionfield.errors import MotionFieldError, UsageError
from motionfield.geometry.io import load_mesh, load_points, save_mesh, save_points
from motionfield.geometry.mesh import PointSet, vertex_normals
from motionfield.storage.checkpoint import load_checkpoint, quantize, save_checkpoint
from motionfield.storage.report import summary_markdown, write_metrics, write_train_report

logger = logging.getLogger(__name__)

console = Console()
err_console = Console(stderr=True)

VARIANT_CHOICES = sorted(
    {"trans", "se3", "scaled-se3", "affinity", "dpf", "relu-pe", "bonecloud", *VARIANT_ALIASES}
)
SCAN_PATTERN = "scan_*.ply"


# Argument types


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _non_negative_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0.0 or value == float("inf"):
        raise argparse.ArgumentTypeError(f"expected a finite number >= 0, got {text}")
    return value


def _batch_points(text: str) -> int | str:
    return "all" if text == "all" else _positive_int(text)


# Logging and progress


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    """Route library logging through rich; -v shows DEBUG, -q only warnings."""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _run_with_progress(
    total: int, quiet: bool, task: Callable[[ProgressFn | None], TrainReport]
) -> TrainReport:
    if quiet:
        return task(None)
    columns = (
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.completed}/{task.total}"),
        TextColumn("loss {task.fields[loss]:.4g}"),
        TimeElapsedColumn(),
    )
    with Progress(*columns, console=err_console, transient=True) as progress:
        bar = progress.add_task("training", total=total, loss=float("nan"))

        def advance(iteration: int, loss: float) -> None:
            progress.update(bar, completed=iteration + 1, loss=loss)

        return task(advance)


# gen


def _manifest(path: Path, ts: TrajectorySet) -> None:
    console.print(f"wrote {path} ({ts.n_points} points, {ts.n_frames} frames, {ts.dim}D)")


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.kind == "elemental":
        ts = gen_elemental(
            MotionKind(args.motion),
            args.points,
            args.frames,
            args.dim,
            args.magnitude,
            args.seed,
            args.train_fraction,
        )
        save_trajectories(ts, out)
        _manifest(out, ts)
    elif args.kind == "image2d":
        ts = gen_image2d(
            MotionKind(args.motion),
            args.side,
            args.magnitude,
            args.frames,
            args.seed,
            args.train_fraction,
        )
        save_trajectories(ts, out)
        _manifest(out, ts)
    elif args.kind == "alignment":
        seq = gen_alignment_sequence(args.seed, args.frames, args.scan_points, args.guidance)
        out.mkdir(parents=True, exist_ok=True)
        save_mesh(seq.template, out / "template.obj")
        for k, scan in enumerate(seq.scans):
            save_points(scan, out / f"scan_{k:03d}.ply")
        save_trajectories(seq.guidance, out / "guidance.dtrj")
        truth = TrajectorySet(
            seq.template.vertices,
            seq.guidance.times,
            seq.vertex_traj,
            [False] * seq.template.n_vertices,
        )
        save_trajectories(truth, out / "truth.dtrj")
        console.print(
            f"wrote {out}: template.obj, {seq.n_frames} scans, guidance.dtrj, truth.dtrj"
        )
    else:
        source = load_trajectories(args.data)
        starts = range(args.first, args.last, args.every)
        clips = extract_clips(
            source, args.step, args.clip_len, starts, args.train_fraction, args.seed
        )
        out.mkdir(parents=True, exist_ok=True)
        for i, clip in enumerate(clips):
            save_trajectories(clip, out / f"clip_{i:03d}.dtrj")
        console.print(f"wrote {out}: {len(clips)} clips of {args.clip_len} frames")
    return 0


# train


def _train_config(args: argparse.Namespace, reg_mode: RegMode) -> TrainConfig:
    cfg = TrainConfig(
        lr=args.lr,
        iters=args.iters,
        seed=args.seed,
        batch_points=args.batch_points,
        reg_mode=reg_mode,
        jacobian=args.jacobian,
        log_every=0 if args.quiet else 100,
    )
    weight = getattr(args, "reg_weight", None)
    if weight is not None:
        cfg.smoothness_weight = cfg.elastic_weight = cfg.aiap_weight = weight
    return cfg


def cmd_train(args: argparse.Namespace) -> int:
    data = load_trajectories(args.data)
    variant, pe_levels = parse_variant(args.variant)
    reg_mode = RegMode(args.reg)
    # The ReLU baseline keeps its own 6 x 128 shape.
    arch = None if variant is Variant.RELU_PE else SirenArch(args.hidden, args.layers)
    m = build_model(
        args.variant,
        data.dim,
        data.n_frames,
        arch,
        args.seed,
        points=data.canonical[data.train_indices],
        pe_levels=pe_levels,
    )
    cfg = _train_config(args, reg_mode)
    report = _run_with_progress(
        cfg.iters, args.quiet, lambda progress: fit_trajectories(m, data, cfg, progress)
    )
    out = Path(args.out)
    size = save_checkpoint(quantize(m), out)
    report_path = Path(args.report) if args.report else out.with_suffix(".csv")
    write_train_report(report, report_path)
    console.print(f"wrote {out} ({variant}, {m.param_count()} params, {size} bytes)")
    console.print(f"wrote {report_path}")
    return 0


# eval


def _load_scans(directory: Path) -> list[PointSet]:
    paths = sorted(directory.glob(SCAN_PATTERN))
    if not paths:
        raise UsageError(f"no {SCAN_PATTERN} files in {directory}")
    return [load_points(p) for p in paths]


def _write_summary(
    path: str | None, title: str, rows: list[Metrics], report: TrainReport | None = None
) -> None:
    if path is None:
        return
    Path(path).write_text(summary_markdown(title, rows, report), encoding="utf-8")
    logger.info("wrote summary %s", path)


def cmd_eval(args: argparse.Namespace) -> int:
    m = load_checkpoint(args.ckpt)
    if args.data is None and args.scans is None:
        raise UsageError("eval needs --data, or --template with --scans")
    row = Metrics(str(m.variant), m.param_count(), args.seed)
    if args.data is not None:
        row = evaluate_trajectories(m, load_trajectories(args.data), args.seed)
    if args.scans is not None:
        if args.template is None:
            raise UsageError("--scans needs --template")
        result = evaluate_alignment(
            m, load_mesh(args.template), _load_scans(Path(args.scans)), seed=args.seed
        )
        aligned = result.metrics
        row.cd, row.cdn = aligned.cd, aligned.cdn
        row.std_e, row.std_v = aligned.std_e, aligned.std_v
    write_metrics([row], args.out)
    console.print(f"wrote {args.out}")
    _write_summary(args.summary, f"{m.variant} evaluation", [row])
    return 0


# align


def cmd_align(args: argparse.Namespace) -> int:
    template = load_mesh(args.template)
    scans = _load_scans(Path(args.scans))
    guidance = load_trajectories(args.guidance)
    truth = load_trajectories(args.truth).targets if args.truth else None
    weights = LossWeights(args.alpha1, args.alpha2, args.alpha3, args.alpha4)
    m = build_model(
        args.variant,
        3,
        len(scans),
        SirenArch(args.hidden, args.layers),
        args.seed,
        points=scans[0].points,
    )
    cfg = _train_config(args, RegMode.NONE)
    report = _run_with_progress(
        cfg.iters,
        args.quiet,
        lambda progress: fit_alignment(m, template, scans, guidance, cfg, weights, progress),
    )
    quantize(m)
    result = evaluate_alignment(m, template, scans, truth, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for k, mesh in enumerate(result.meshes):
        save_mesh(mesh, out / f"frame_{k:03d}.obj", normals=vertex_normals(mesh))
    save_checkpoint(m, out / "model.doma")
    write_train_report(report, out / "train.csv")
    write_metrics([result.metrics], out / "metrics.csv")
    _write_summary(args.summary, "Guided alignment", [result.metrics], report)
    console.print(f"wrote {out}: {len(result.meshes)} meshes, model.doma, train.csv, metrics.csv")
    return 0


# info and presets


def cmd_info(args: argparse.Namespace) -> int:
    info = model_info(load_checkpoint(args.ckpt))
    console.print(f"variant: {info['variant']}")
    console.print(f"architecture: {info['architecture']}")
    console.print(f"params: {info['params']}")
    console.print(f"biases: {info['biases']}")
    console.print(f"bytes: {info['checkpoint_bytes']} ({info['checkpoint_kb']:.1f} KB)")
    return 0


def _search_presets(query: str) -> int:
    results = search_presets(query)
    if not results:
        console.print(f"[yellow]No presets mention:[/yellow] {query}")
        return 0
    console.print(f"[green]Found {len(results)} matches for:[/green] {query}")
    by_preset: dict[str, list[tuple[str, str]]] = {}
    for name, field, content in results:
        by_preset.setdefault(name, []).append((field, content))
    for name, items in by_preset.items():
        console.print(f"\n[bold cyan]{name}[/bold cyan]")
        for field, content in items:
            console.print(f"[bold yellow]{field.capitalize()}:[/bold yellow] {content}")
    return 0


def cmd_presets(args: argparse.Namespace) -> int:
    if args.search is not None:
        return _search_presets(args.search)
    if args.name is None:
        table = Table(title="Experiment presets")
        table.add_column("Preset", style="cyan")
        table.add_column("Title", style="green")
        for name, title in list_presets():
            table.add_row(name, title)
        console.print(table)
        return 0
    preset = get_preset(args.name)
    console.print(Panel(f"[bold cyan]{preset['title']}[/bold cyan]", expand=False))
    console.print(preset["description"])
    runs = Table(show_header=True)
    runs.add_column("Variant")
    runs.add_column("Regularizer")
    for run in preset["runs"]:
        runs.add_row(run["variant"], run["reg"])
    console.print(runs)
    sections = (("data", preset["data"]), ("model", preset["model"]), ("train", preset["train"]))
    for section, values in sections:
        console.print(f"\n[bold green]{section}:[/bold green]")
        for key, value in values.items():
            console.print(f"[yellow]{key}:[/yellow] {value}")
    for note in preset["notes"]:
        console.print(f"- {note}")
    return 0


# Parser


def _add_training_flags(parser: argparse.ArgumentParser, layers: int) -> None:
    parser.add_argument("--hidden", type=_positive_int, default=DEFAULT_HIDDEN)
    parser.add_argument("--layers", type=_positive_int, default=layers)
    parser.add_argument("--iters", type=_positive_int, default=DEFAULT_ITERS)
    parser.add_argument("--lr", type=float, default=DEFAULT_LR)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--batch-points", type=_batch_points, default="all")
    parser.add_argument(
        "--jacobian", choices=["analytical", "finite-difference"], default="analytical"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motionfield",
        description="Train and evaluate implicit motion fields",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    noise = parser.add_mutually_exclusive_group()
    noise.add_argument("-v", "--verbose", action="store_true", help="Show debug logging")
    noise.add_argument("-q", "--quiet", action="store_true", help="Only show warnings")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate synthetic data")
    kinds = gen.add_subparsers(dest="kind", required=True)
    motions = [k.value for k in MotionKind]
    elemental = kinds.add_parser("elemental", help="Points under one elemental motion")
    elemental.add_argument("--motion", choices=motions, required=True)
    elemental.add_argument("--points", type=_positive_int, default=3000)
    elemental.add_argument("--frames", type=_positive_int, default=20)
    elemental.add_argument("--dim", type=int, choices=[2, 3], default=3)
    image = kinds.add_parser("image2d", help="An image pixel grid under a 2D motion")
    image.add_argument("--motion", choices=motions, required=True)
    image.add_argument("--side", type=_positive_int, default=512)
    image.add_argument("--frames", type=_positive_int, default=30)
    for p in (elemental, image):
        p.add_argument("--magnitude", type=float, default=None)
        p.add_argument("--train-fraction", type=float, default=0.25)
    alignment = kinds.add_parser("alignment", help="A bending cylinder with scans")
    alignment.add_argument("--frames", type=_positive_int, default=30)
    alignment.add_argument("--scan-points", type=_positive_int, default=4000)
    alignment.add_argument("--guidance", type=_positive_int, default=200)
    clips = kinds.add_parser("clips", help="Cut a recording into short clips")
    clips.add_argument("--data", required=True)
    clips.add_argument("--step", type=_positive_int, default=CLIP_STEP)
    clips.add_argument("--clip-len", type=_positive_int, default=CLIP_LENGTH)
    clips.add_argument("--first", type=int, default=10)
    clips.add_argument("--last", type=int, default=326)
    clips.add_argument("--every", type=_positive_int, default=5)
    clips.add_argument("--train-fraction", type=float, default=CLIP_TRAIN_FRACTION)
    for p in (elemental, image, alignment, clips):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", required=True)

    train = sub.add_parser("train", help="Fit a motion field to trajectories")
    train.add_argument("--data", required=True)
    train.add_argument("--variant", choices=VARIANT_CHOICES, default="affinity")
    train.add_argument("--reg", choices=[r.value for r in RegMode], default="none")
    train.add_argument("--reg-weight", type=_non_negative_float, default=None)
    _add_training_flags(train, DEFAULT_LAYERS)
    train.add_argument("--out", required=True, help="Checkpoint path")
    train.add_argument("--report", default=None, help="Loss CSV (default: next to --out)")

    evaluate = sub.add_parser("eval", help="Score a checkpoint on held-out data")
    evaluate.add_argument("--ckpt", required=True)
    evaluate.add_argument("--data", default=None)
    evaluate.add_argument("--template", default=None)
    evaluate.add_argument("--scans", default=None, help=f"Directory of {SCAN_PATTERN}")
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--summary", default=None, help="Also write a markdown summary")

    align = sub.add_parser("align", help="Guided alignment of a template to scans")
    align.add_argument("--template", required=True)
    align.add_argument("--scans", required=True, help=f"Directory of {SCAN_PATTERN}")
    align.add_argument("--guidance", required=True)
    align.add_argument("--truth", default=None, help="Ground-truth vertex trajectories")
    align.add_argument("--variant", choices=VARIANT_CHOICES, default="affinity")
    defaults = LossWeights()
    for name in ("alpha1", "alpha2", "alpha3", "alpha4"):
        align.add_argument(f"--{name}", type=_non_negative_float, default=getattr(defaults, name))
    _add_training_flags(align, ALIGNMENT_LAYERS)
    align.add_argument("--out", required=True, help="Output directory")
    align.add_argument("--summary", default=None, help="Also write a markdown summary")

    info = sub.add_parser("info", help="Describe a checkpoint")
    info.add_argument("--ckpt", required=True)

    presets = sub.add_parser("presets", help="List experiment presets")
    presets.add_argument("name", nargs="?", default=None)
    presets.add_argument("--search", default=None, help="Find presets mentioning a word")
    return parser


COMMANDS: dict[str, Callable[[argparse.Namespace], int]] = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "align": cmd_align,
    "info": cmd_info,
    "presets": cmd_presets,
}


def run(argv: Sequence[str] | None = None) -> int:
    """Parse argv, run the command and return its exit code."""
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return COMMANDS[args.command](args)
    except MotionFieldError as e:
        err_console.print(f"[bold red]Error:[/bold red] {e}")
        return e.exit_code
    except OSError as e:
        err_console.print(f"[bold red]Error:[/bold red] {e}")
        return 1


def main(argv: Sequence[str] | None = None) -> NoReturn:
    """Main entry point for the CLI."""
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
