import argparse
import json
import logging
import os
import sys
import typing

from traitlets import TraitError

from . import __version__
from .bench import BENCH_COLUMNS, bench, rows_to_csv, rows_to_json
from .complexity import ComplexityConfig, complexity_report, scale_sweep_reports
from .complexity import to_csv, to_json
from .exception import EXIT_OK, CrossMambaException, SceneIOError, UsageError
from .exception import VerificationFailed
from .pipeline import load_run_config, run_pipeline
from .scene import gen_scene, scene_from_flags
from .utils import sha256_bytes
from .verify import LEVELS, verify_suite

if typing.TYPE_CHECKING:
    from typing import List, Optional

LOG = logging.getLogger(__name__)


class ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors as exceptions so they share the JSON error path."""

    def error(self, message):
        raise UsageError(reason=message)


def _level(value: "str"):
    try:
        H_f, W_f, D = (int(part) for part in value.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxWxD, got '{value}'")
    return H_f, W_f, D


def build_parser() -> "ArgumentParser":
    parser = ArgumentParser(
        prog="crossmamba",
        description="Position-aware cross scan kernels, scenes and reports",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--seed", type=int, default=0, help="Seed for all streams")
    parser.add_argument("--out", default=None, help="Output directory or file")
    parser.add_argument("--config", default=None, help="Run configuration JSON")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    commands = parser.add_subparsers(dest="command", parser_class=ArgumentParser)
    commands.required = True

    scene = commands.add_parser("gen-scene", help="Write a synthetic scene")
    scene.add_argument("--cameras", type=int, default=6)
    scene.add_argument("--fov", type=float, default=60.0)
    scene.add_argument("--image", type=int, nargs=2, default=(800, 450))
    scene.add_argument("--bev", type=int, nargs=2, default=(50, 50))
    scene.add_argument(
        "--extent", type=float, nargs=4, default=(-51.2, 51.2, -51.2, 51.2)
    )
    scene.add_argument("--pillar-z", type=float, nargs="+", default=None)
    scene.add_argument("--level", type=_level, action="append", default=None)
    scene.add_argument("--value-scale", type=float, default=1.0)

    run = commands.add_parser("run", help="Run the encoder layer on a scene")
    run.add_argument("scene_dir")

    flops = commands.add_parser("flops", help="Complexity report")
    flops.add_argument("--bev", type=int, nargs=2, default=None)
    flops.add_argument("--image", type=int, nargs=2, default=None)
    flops.add_argument("--cameras", type=int, default=6)
    flops.add_argument("--stride", type=int, default=32)

    verify = commands.add_parser("verify", help="Run the invariant suite")
    verify.add_argument("--level", choices=LEVELS, default="fast")

    bench_cmd = commands.add_parser("bench", help="Time the scan backends")
    bench_cmd.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    bench_cmd.add_argument("--queries", type=int, default=64)
    return parser


def _emit(text: "str", out: "Optional[str]" = None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(out, "w") as f:
        f.write(text)


def cmd_gen_scene(args) -> "int":
    spec = scene_from_flags(
        seed=args.seed,
        cameras=args.cameras,
        fov=args.fov,
        image=args.image,
        bev=args.bev,
        extent=args.extent,
        pillar_z=args.pillar_z,
        levels=args.level or ((15, 25, 32),),
        value_scale=args.value_scale,
    )
    out_dir = args.out or "scene"
    files = gen_scene(spec, out_dir)
    digests = {}
    for name in files:
        with open(os.path.join(out_dir, name), "rb") as f:
            digests[name] = sha256_bytes(f.read())
    listing = {"scene_dir": out_dir, "sha256": digests}
    _emit(json.dumps(listing, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_run(args) -> "int":
    config = load_run_config(args.config)
    summary = run_pipeline(args.scene_dir, config, args.out or "run")
    _emit(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_flops(args) -> "int":
    if args.bev is None and args.image is None:
        reports = scale_sweep_reports(cameras=args.cameras, stride=args.stride)
    else:
        bev = args.bev or (50, 50)
        image = args.image or (800, 450)
        config = ComplexityConfig.from_dict(
            dict(
                H_bev=bev[0],
                W_bev=bev[1],
                img_w=image[0],
                img_h=image[1],
                cameras=args.cameras,
                stride=args.stride,
            )
        )
        reports = [complexity_report(config)]
    _emit(to_csv(reports) if args.format == "csv" else to_json(reports), args.out)
    return EXIT_OK


def cmd_verify(args) -> "int":
    report = verify_suite(args.level, args.seed)
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    if not report["passed"]:
        raise VerificationFailed(failed=report["failed"], total=report["total"])
    return EXIT_OK


def cmd_bench(args) -> "int":
    if args.queries < 0 or any(size < 0 for size in args.sizes):
        raise UsageError(reason="--sizes and --queries must be nonnegative")
    rows = bench(args.sizes, args.queries, args.seed)
    if args.format == "csv":
        _emit(rows_to_csv(rows, BENCH_COLUMNS), args.out)
    else:
        _emit(rows_to_json(rows), args.out)
    return EXIT_OK


COMMANDS = {
    "gen-scene": cmd_gen_scene,
    "run": cmd_run,
    "flops": cmd_flops,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def _report(error: "CrossMambaException") -> "int":
    LOG.debug("command failed", exc_info=True)
    sys.stderr.write(json.dumps(error.as_dict(), sort_keys=True) + "\n")
    return error.exit_code


def main(argv: "Optional[List[str]]" = None) -> "int":
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except CrossMambaException as exc:
        return _report(exc)
    except OSError as exc:
        return _report(
            SceneIOError(
                path=exc.filename or "<unknown>", reason=exc.strerror or str(exc)
            )
        )
    except (TraitError, ValueError) as exc:
        return _report(UsageError(reason=str(exc)))


if __name__ == "__main__":
    sys.exit(main())
