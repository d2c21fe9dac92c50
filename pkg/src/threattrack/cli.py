"""Command-line client for the tracking service.

Every command builds a typed request, sends it to a backend (in-process by
default, a remote server when --server is given), and writes the response to
files. Diagnostics go to stderr; only data goes to stdout or output files.

Exit codes: 0 success, 1 usage error, 2 input validation error, 3 internal.
"""

from __future__ import annotations

import argparse
import base64
import json
import sys
from pathlib import Path

from . import __version__, fileio
from .client import ClientError, make_backend
from .fileio import FormatError
from .metrics import WindowedReport
from .service import models
from .synthdata import list_images
from .tracker import TrackerConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3

_PROFILE_KEYS = (
    "apply_prob",
    "noise_sigma_max",
    "blur_sigma_max",
    "ca_scale_min",
    "ca_scale_max",
    "ca_shift_max",
    "exposure_stops_max",
    "color_shift_max",
)


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors on exit code 1 instead of 2."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="threattrack", description=__doc__)
    parser.add_argument("--version", action="version", version=f"threattrack {__version__}")
    parser.add_argument(
        "--help-json", action="store_true", help="print commands and flags as JSON and exit"
    )
    parser.add_argument("--server", metavar="URL", help="remote service URL (default: in-process)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def tracker_flags(p):
        p.add_argument("--config", metavar="F", help="flat key = value config file")
        p.add_argument("--gun-thresh", type=float, metavar="X")
        p.add_argument("--shooter-thresh", type=float, metavar="X")
        p.add_argument("--no-gun-confirm", action="store_true")

    p = sub.add_parser("track", help="run the tracker over a detection file")
    p.add_argument("--dets", required=True, metavar="F")
    p.add_argument("--embs", metavar="F")
    tracker_flags(p)
    p.add_argument("--out", required=True, metavar="F")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="CLEAR and identity metrics for a track file")
    p.add_argument("--gt", required=True, metavar="F")
    p.add_argument("--tracks", required=True, metavar="F")
    p.add_argument("--iou", type=float, default=0.5, metavar="X")
    p.add_argument("--out", required=True, metavar="F")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="dual-threshold grid, with and without gun confirmation")
    p.add_argument("--dets", required=True, metavar="F")
    p.add_argument("--gt", required=True, metavar="F")
    p.add_argument("--embs", metavar="F")
    p.add_argument("--config", metavar="F")
    p.add_argument("--iou", type=float, default=0.5, metavar="X")
    p.add_argument("--jobs", type=int, default=1, metavar="N")
    p.add_argument("--out", required=True, metavar="F")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("sysmetric", help="windowed system-level P/R/F1")
    p.add_argument("--gt", required=True, metavar="F")
    p.add_argument("--tracks", required=True, metavar="F")
    p.add_argument("--windows", required=True, metavar="SPEC", help="e.g. 1:60, 1:60:2 or 1,3,5")
    p.add_argument("--iou", type=float, default=0.5, metavar="X")
    p.add_argument("--out", required=True, metavar="F")
    p.set_defaults(func=_cmd_sysmetric)

    p = sub.add_parser("augment", help="apply camera sensor effects to a directory of PNGs")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", dest="out_dir", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, required=True, metavar="N")
    p.add_argument("--profile", metavar="F", help="flat key = value profile file")
    p.add_argument("--jobs", type=int, default=1, metavar="N")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("recolor", help="randomize mask colors, keeping object identities")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", dest="out_dir", required=True, metavar="DIR")
    p.add_argument("--map", required=True, metavar="F", help="color map CSV")
    p.add_argument("--seed", type=int, required=True, metavar="N")
    p.set_defaults(func=_cmd_recolor)

    p = sub.add_parser("annotate", help="extract tight boxes from mask images")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--map", required=True, metavar="F")
    p.add_argument("--min-side", type=float, default=8, metavar="PX")
    p.add_argument("--out", required=True, metavar="F")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("bench", help="time the tracking step over a detection file")
    p.add_argument("--dets", required=True, metavar="F")
    p.add_argument("--embs", metavar="F")
    p.add_argument("--config", metavar="F")
    p.add_argument("--repeat", type=int, default=1, metavar="N")
    p.set_defaults(func=_cmd_bench)

    return parser


def _help_json(parser: _Parser) -> str:
    commands = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for name, sp in action.choices.items():
                flags = []
                for a in sp._actions:
                    if a.option_strings and a.option_strings != ["-h", "--help"]:
                        flags.append(
                            {
                                "flag": a.option_strings[0],
                                "required": bool(a.required),
                                "help": a.help or "",
                            }
                        )
                commands[name] = {"help": sp.description or sp.prog, "flags": flags}
    return json.dumps({"program": "threattrack", "version": __version__, "commands": commands})


def _resolve_config(args) -> TrackerConfig:
    cfg = TrackerConfig()
    path = getattr(args, "config", None) or fileio.default_config_path()
    if path:
        cfg = fileio.tracker_config_from_mapping(fileio.read_config(path), cfg)
    overrides = {}
    if getattr(args, "gun_thresh", None) is not None:
        overrides["gun_conf_thresh"] = args.gun_thresh
    if getattr(args, "shooter_thresh", None) is not None:
        overrides["shooter_conf_thresh"] = args.shooter_thresh
    if getattr(args, "no_gun_confirm", False):
        overrides["gun_confirm"] = False
    return cfg.replace(**overrides) if overrides else cfg


def _detection_models(dets_path, embs_path):
    detections = fileio.read_detections(dets_path)
    det_models = [models.DetectionModel.from_domain(d) for d in detections]
    emb_models = []
    if embs_path:
        table = fileio.read_embeddings(embs_path, detections)
        emb_models = [
            models.EmbeddingModel(frame=f + 1, det=i, v=[float(x) for x in v])
            for (f, i), v in sorted(table.items())
        ]
    return det_models, emb_models


def _parse_windows(spec: str) -> list[int]:
    spec = spec.strip()
    try:
        if "," in spec:
            return [int(p) for p in spec.split(",")]
        if ":" in spec:
            parts = [int(p) for p in spec.split(":")]
            if len(parts) == 2:
                lo, hi, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                lo, hi, step = parts
            else:
                raise ValueError
            if step < 1 or hi < lo:
                raise ValueError
            return list(range(lo, hi + 1, step))
        return [int(spec)]
    except ValueError:
        raise FormatError(f"invalid window spec {spec!r}; use LO:HI, LO:HI:STEP or a comma list") from None


def _load_image_payloads(in_dir) -> list[models.ImagePayload]:
    directory = Path(in_dir)
    if not directory.is_dir():
        raise FormatError(f"not a directory: {directory}")
    paths = list_images(directory)
    if not paths:
        raise FormatError(f"no .png files in {directory}")
    return [
        models.ImagePayload(
            name=p.name, png_b64=base64.b64encode(p.read_bytes()).decode("ascii")
        )
        for p in paths
    ]


def _write_image_payload(out_dir: Path, payload: models.ImagePayload) -> None:
    (out_dir / payload.name).write_bytes(base64.b64decode(payload.png_b64))


def _cmd_track(args, backend) -> int:
    det_models, emb_models = _detection_models(args.dets, args.embs)
    request = models.TrackRequest(
        detections=det_models,
        embeddings=emb_models,
        config=models.TrackerConfigModel.from_domain(_resolve_config(args)),
    )
    response = backend.track(request)
    fileio.write_tracks(args.out, [r.to_domain() for r in response.rows])
    return EXIT_OK


def _cmd_eval(args, backend) -> int:
    request = models.EvalRequest(
        gt=[models.GtRowModel.from_domain(g) for g in fileio.read_ground_truth(args.gt)],
        tracks=[models.TrackRowModel.from_domain(t) for t in fileio.read_tracks(args.tracks)],
        iou_thresh=args.iou,
    )
    response = backend.evaluate(request)
    counts, report = response.metrics.to_domain()
    fileio.write_metrics_csv(args.out, counts, report)
    return EXIT_OK


def _cmd_sweep(args, backend) -> int:
    det_models, emb_models = _detection_models(args.dets, args.embs)
    request = models.SweepRequest(
        detections=det_models,
        gt=[models.GtRowModel.from_domain(g) for g in fileio.read_ground_truth(args.gt)],
        embeddings=emb_models,
        config=models.TrackerConfigModel.from_domain(_resolve_config(args)),
        iou_thresh=args.iou,
        jobs=args.jobs,
    )
    response = backend.sweep(request)
    rows = []
    for r in response.rows:
        counts, report = r.metrics.to_domain()
        rows.append(
            fileio.SweepRow(
                mode=r.mode,
                gun_thresh=r.gun_thresh,
                shooter_thresh=r.shooter_thresh,
                counts=counts,
                report=report,
            )
        )
    fileio.write_sweep_csv(args.out, rows)
    return EXIT_OK


def _cmd_sysmetric(args, backend) -> int:
    request = models.WindowMetricsRequest(
        gt=[models.GtRowModel.from_domain(g) for g in fileio.read_ground_truth(args.gt)],
        tracks=[models.TrackRowModel.from_domain(t) for t in fileio.read_tracks(args.tracks)],
        windows=_parse_windows(args.windows),
        iou_thresh=args.iou,
    )
    response = backend.window_metrics(request)
    fileio.write_windowed_csv(
        args.out,
        [
            (
                r.requested_window,
                WindowedReport(window=r.window, precision=r.precision, recall=r.recall, f1=r.f1),
            )
            for r in response.rows
        ],
    )
    return EXIT_OK


def _read_profile(path) -> models.AugmentProfileModel:
    values = fileio.read_config(path)
    unknown = set(values) - set(_PROFILE_KEYS)
    if unknown:
        raise FormatError(f"unknown profile keys: {', '.join(sorted(unknown))}")
    return models.AugmentProfileModel(**{k: float(v) for k, v in values.items()})


def _cmd_augment(args, backend) -> int:
    request = models.AugmentRequest(
        images=_load_image_payloads(args.in_dir),
        seed=args.seed,
        profile=_read_profile(args.profile) if args.profile else models.AugmentProfileModel(),
        jobs=args.jobs,
    )
    response = backend.augment(request)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for payload in response.images:
        _write_image_payload(out_dir, payload)
    return EXIT_OK


def _cmd_recolor(args, backend) -> int:
    request = models.RecolorRequest(
        images=_load_image_payloads(args.in_dir),
        seed=args.seed,
        color_map=models.ColorMapModel.from_domain(fileio.read_color_map(args.map)),
    )
    response = backend.recolor(request)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for result in response.results:
        _write_image_payload(out_dir, result.image)
        sidecar = out_dir / (Path(result.image.name).stem + ".colormap.csv")
        fileio.write_color_map(sidecar, result.color_map.to_domain())
        for color in result.warnings:
            print(
                f"warning: {result.image.name}: color {color} occurs only a few times "
                "(anti-aliased mask?)",
                file=sys.stderr,
            )
    return EXIT_OK


def _cmd_annotate(args, backend) -> int:
    request = models.AnnotateRequest(
        images=_load_image_payloads(args.in_dir),
        color_map=models.ColorMapModel.from_domain(fileio.read_color_map(args.map)),
        min_side=args.min_side,
    )
    response = backend.annotate(request)
    fileio.write_detections(args.out, [d.to_domain() for d in response.detections])
    return EXIT_OK


def _cmd_bench(args, backend) -> int:
    det_models, emb_models = _detection_models(args.dets, args.embs)
    request = models.BenchRequest(
        detections=det_models,
        embeddings=emb_models,
        config=models.TrackerConfigModel.from_domain(_resolve_config(args)),
        repeat=args.repeat,
    )
    response = backend.bench(request)
    print("stage,mean_ms,p50_ms,p95_ms")
    for name in (*sorted(response.stages), "total"):
        stats = response.total if name == "total" else response.stages[name]
        print(f"{name},{fileio.fmt(stats.mean_ms)},{fileio.fmt(stats.p50_ms)},{fileio.fmt(stats.p95_ms)}")
    print(f"# fps={fileio.fmt(response.fps)} frames={response.frames} repeats={response.repeats}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.help_json:
        print(_help_json(parser))
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    backend = make_backend(args.server)
    try:
        return args.func(args, backend)
    except (FormatError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"threattrack: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"threattrack: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ClientError as exc:
        print(f"threattrack: {exc}", file=sys.stderr)
        return EXIT_INPUT if exc.status < 500 else EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last resort, reported as internal
        print(f"threattrack: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
