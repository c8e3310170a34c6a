"""Command-line front end.

Subcommands: synth (phantom generation), register (global or sequential
registration runs), landscape (translation energy sweeps), mip (summed
error projection), drift (mean-displacement diagnostic).  All tabular
output is CSV with a header row and LF line endings; images are binary
PGM; fields use the DFIELD format.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .determinism import set_deterministic
from .grid_image import Image, ImageStack, load_pgm, save_pgm
from .interp_transform import (
    DisplacementField,
    TranslationParams,
    load_dfield,
    save_dfield,
    translation_to_field,
    warp,
)
from .measures import MeasureConfig, measure_value
from .optimizer import OptimizerConfig, register_global, register_sequential
from .phantoms import PhantomSpec, make_phantom

__all__ = [
    "LandscapeSpec",
    "mip_error",
    "drift_metric",
    "landscape",
    "main",
]


@dataclass(frozen=True)
class LandscapeSpec:
    """Integer translation sweep: symmetric range, step, measures, q values."""

    shift_range: int = 8
    step: int = 1
    measures: tuple[str, ...] = ("ssd", "mi", "ngf", "sqn")
    q_list: tuple[float, ...] = (0.5, 1.0, 1.5)
    eta: float = 1e-5
    eps: float = 1e-6
    bins: int = 16

    def __post_init__(self):
        if self.shift_range < 0 or self.step < 1:
            raise ValueError("need shift_range >= 0 and step >= 1")
        for m in self.measures:
            if m not in ("ssd", "mi", "ngf", "sqn"):
                raise ValueError(f"unknown measure {m!r}")


def mip_error(stack: ImageStack) -> Image:
    """Summed error projection sum_{j>i} |I_j - I_i| per node (raw values)."""
    frames = [f.values for f in stack.frames]
    total = np.zeros_like(frames[0])
    for i in range(len(frames)):
        for j in range(i + 1, len(frames)):
            total += np.abs(frames[j] - frames[i])
    return Image(stack.grid, total)


def write_mip(image: Image, path) -> float:
    """Write the projection rescaled to [0, 255]; returns the scale factor."""
    peak = float(image.values.max())
    scale = 255.0 / peak if peak > 0 else 1.0
    save_pgm(Image(image.grid, image.values * scale), path)
    return scale


def drift_metric(fields: list[DisplacementField]) -> tuple[float, float, np.ndarray]:
    """Per-frame mean displacements; drift = ||mean over frames||.

    Returns (drift, max per-frame mean norm, (T, d) per-frame means).
    """
    if len(fields) < 2:
        raise ValueError("need at least two fields")
    means = np.stack([f.mean_displacement() for f in fields])
    drift = float(np.linalg.norm(means.mean(axis=0)))
    max_norm = float(np.max(np.linalg.norm(means, axis=1)))
    return drift, max_norm, means


def landscape(ref: Image, tpl: Image, spec: LandscapeSpec) -> list[tuple]:
    """Rows (dx, dy, measure_id, value) over the integer shift sweep."""
    if ref.grid != tpl.grid:
        raise ValueError("reference and template must share one grid")
    configs: list[tuple[str, MeasureConfig]] = []
    for m in spec.measures:
        if m == "sqn":
            for q in spec.q_list:
                configs.append((f"sqn_q{q:g}", MeasureConfig("sqn", q=q, eta=spec.eta, eps=spec.eps)))
        elif m == "ngf":
            configs.append(("ngf", MeasureConfig("ngf", eta=spec.eta)))
        elif m == "mi":
            configs.append(("mi", MeasureConfig("mi", bins=spec.bins)))
        else:
            configs.append(("ssd", MeasureConfig("ssd")))

    shifts = range(-spec.shift_range, spec.shift_range + 1, spec.step)
    rows = []
    for dx in shifts:
        for dy in shifts:
            fld = translation_to_field(TranslationParams((float(dx), float(dy))), ref.grid)
            for mid, cfg in configs:
                rows.append((dx, dy, mid, measure_value(ref, tpl, fld, cfg)))
    return rows


def load_manifest(path) -> ImageStack:
    """Stack manifest: one PGM path per line, temporal order."""
    base = Path(path).parent
    frames = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        p = Path(line)
        frames.append(load_pgm(p if p.is_absolute() else base / p))
    if len(frames) < 2:
        raise ValueError("manifest must list at least two frames")
    return ImageStack(tuple(frames))


def _write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cmd_synth(args) -> int:
    spec = PhantomSpec(
        kind=args.kind,
        T=args.frames,
        dims=(args.dims, args.dims),
        seed=args.seed,
        max_shift=args.max_shift,
        ramp=(args.ramp[0], args.ramp[1]),
        amplitude=args.amplitude,
        jitter_sigma=args.jitter,
    )
    stack, truth = make_phantom(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for t, frame in enumerate(stack.frames):
        name = f"frame_{t:03d}.pgm"
        save_pgm(frame, out / name)
        names.append(name)
    (out / "manifest.txt").write_text("\n".join(names) + "\n")
    _write_csv(
        out / "truth.csv",
        ["frame", "shift_ax0", "shift_ax1", "scale"],
        [(t, truth.shifts[t, 0], truth.shifts[t, 1], truth.scales[t]) for t in range(spec.T)],
    )
    print(f"wrote {spec.T} frames, manifest.txt and truth.csv to {out}")
    return 0


def _cmd_register(args) -> int:
    set_deterministic(args.deterministic)
    stack = load_manifest(args.manifest)
    ocfg = OptimizerConfig(max_iter=args.max_iter, levels=args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    if args.mode == "global":
        if args.measure != "sqn":
            raise ValueError("global mode uses the sqn measure")
        mcfg = MeasureConfig("sqn", q=args.q, eta=args.eta, eps=args.epsilon)
        result = register_global(stack, mcfg, args.alpha, ocfg)
    else:
        if args.measure not in ("ngf", "ssd"):
            raise ValueError("sequential mode uses measure 'ngf' or 'ssd'")
        result = register_sequential(
            stack,
            args.measure,
            args.alpha,
            ocfg,
            sweeps=args.sweeps,
            freeze_endpoints=args.freeze_endpoints,
            eta=args.eta,
        )
    elapsed = time.perf_counter() - t0

    registered = []
    for t, (frame, fld) in enumerate(zip(stack.frames, result.fields)):
        warped, _ = warp(frame, fld)
        img = Image(stack.grid, warped)
        registered.append(img)
        save_pgm(img, out / f"registered_{t:03d}.pgm")
        save_dfield(fld, out / f"field_{t:03d}.dfield")

    header = ["iteration", "level", "value", "grad_norm", "step", "seconds"]
    _write_csv(
        out / "trace.csv",
        header,
        [
            # wall-clock readings are zeroed in deterministic mode so the
            # CSV outputs of identical command lines are byte-identical
            (
                r["iteration"],
                r["level"],
                r["value"],
                r["grad_norm"],
                r["step"],
                0.0 if args.deterministic else r["seconds"],
            )
            for r in result.trace
        ],
    )

    mip_in = mip_error(stack)
    mip_out = mip_error(ImageStack(tuple(registered)))
    scale_in = write_mip(mip_in, out / "mip_input.pgm")
    scale_out = write_mip(mip_out, out / "mip_output.pgm")

    drift, max_norm, means = drift_metric(result.fields)
    _write_csv(
        out / "drift.csv",
        ["frame", "mean_ax0", "mean_ax1", "norm"],
        [(t, means[t, 0], means[t, 1], float(np.linalg.norm(means[t]))) for t in range(stack.T)],
    )

    summary = [
        f"mode: {args.mode}",
        f"measure: {args.measure}",
        f"q: {args.q}",
        f"eta: {args.eta}",
        f"epsilon: {args.epsilon}",
        f"alpha: {args.alpha}",
        f"levels: {args.levels}",
        f"sweeps: {args.sweeps}",
        f"frames: {stack.T}",
        f"dims: {stack.grid.dims}",
        f"converged: {result.converged}",
        f"final_objective: {result.final_value}",
        f"wall_clock_seconds: {elapsed}",
        f"level_seconds: {result.timings}",
        f"mip_mean_input: {mip_in.values.mean()}",
        f"mip_mean_output: {mip_out.values.mean()}",
        f"mip_scale_input: {scale_in}",
        f"mip_scale_output: {scale_out}",
        f"drift: {drift}",
        f"max_mean_displacement: {max_norm}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    print("\n".join(summary))
    return 0


def _cmd_landscape(args) -> int:
    ref = load_pgm(args.ref)
    tpl = load_pgm(args.tpl)
    spec = LandscapeSpec(
        shift_range=args.range,
        step=args.step,
        measures=tuple(args.measures),
        q_list=tuple(args.q_list),
        eta=args.eta,
        eps=args.epsilon,
        bins=args.bins,
    )
    rows = landscape(ref, tpl, spec)
    _write_csv(args.out, ["dx", "dy", "measure", "value"], rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _cmd_mip(args) -> int:
    stack = load_manifest(args.manifest)
    image = mip_error(stack)
    scale = write_mip(image, args.out)
    print(f"wrote {args.out} (rescale factor {scale:g}, raw mean {image.values.mean():g})")
    return 0


def _cmd_drift(args) -> int:
    fields = [load_dfield(p) for p in args.fields]
    drift, max_norm, means = drift_metric(fields)
    _write_csv(
        args.out,
        ["frame", "mean_ax0", "mean_ax1", "norm"],
        [(t, means[t, 0], means[t, 1], float(np.linalg.norm(means[t]))) for t in range(len(fields))],
    )
    print(f"drift: {drift:g}\nmax_mean_displacement: {max_norm:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqnreg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic phantom stack")
    p.add_argument("--kind", choices=["uptake", "serial"], default="uptake")
    p.add_argument("--frames", "-T", type=int, default=5)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-shift", type=float, default=3.0)
    p.add_argument("--ramp", type=float, nargs=2, default=[1.0, 2.0])
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("register", help="run a registration")
    p.add_argument("--manifest", required=True)
    p.add_argument("--measure", choices=["sqn", "ngf", "ssd", "mi"], default="sqn")
    p.add_argument("--mode", choices=["global", "sequential"], default="global")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=1e-5)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--sweeps", type=int, default=1)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--freeze-endpoints", action="store_true")
    p.add_argument("--seed", type=int, default=0, help="recorded for provenance")
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_register)

    p = sub.add_parser("landscape", help="translation energy sweep")
    p.add_argument("--ref", required=True)
    p.add_argument("--tpl", required=True)
    p.add_argument("--range", type=int, default=8)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--measures", nargs="+", default=["ssd", "mi", "ngf", "sqn"])
    p.add_argument("--q-list", type=float, nargs="+", default=[0.5, 1.0, 1.5])
    p.add_argument("--eta", type=float, default=1e-5)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--bins", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_landscape)

    p = sub.add_parser("mip", help="summed error projection of a stack")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mip)

    p = sub.add_parser("drift", help="drift diagnostic over DFIELD files")
    p.add_argument("--fields", nargs="+", required=True)
    p.add_argument("--out", default="drift.csv")
    p.set_defaults(func=_cmd_drift)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # CLI contract: nonzero exit with a message
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
