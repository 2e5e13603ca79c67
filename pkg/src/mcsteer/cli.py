"""Command line interface.

Five subcommands cover the pipeline: ``dataset`` renders a training set,
``train`` fits a network, ``eval`` produces binned uncertainty reports,
``simulate`` runs the closed loop offline, and ``serve`` exposes a live
session over a websocket.  Every report-producing command also renders its
figures next to the delimited output, and writes a JSON manifest recording
configuration, seeds, and content hashes.

Exit codes: 0 success, 2 configuration or shape errors, 3 numeric failures,
4 file format or I/O errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import __version__
from .control import (FusionConfig, SimConfig, make_human_source, run_closed_loop,
                      STEP_COLUMNS)
from .dataset import (DatasetConfig, build_dataset, load_dataset, save_dataset,
                      split_dataset)
from .dropout import DropoutKind
from .errors import ConfigError, McsteerError
from .manifest import ConfigReader, RunManifest, read_config_file
from .network import (NetworkConfig, TrainConfig, build_network, load_network,
                      save_network, train)
from .rendering import ImageConfig
from .seeding import derive_seed
from .tracks import TrackConfig, generate_track
from .uncertainty import (BINNED_COLUMNS, McConfig, binned_statistics, estimate,
                          mean_uncertainty_error, uniform_edges)


def _ensure_fresh(paths: list[str], force: bool) -> None:
    for path in paths:
        if os.path.exists(path) and not force:
            raise ConfigError(f"refusing to overwrite {path} (pass --force to allow)")


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def _track_config(reader: ConfigReader) -> TrackConfig:
    return TrackConfig(
        total_length=reader.get_float("track_length", 400.0),
        kappa_max=reader.get_float("kappa_max", 0.2),
        straight_range=(reader.get_float("straight_min", 20.0),
                        reader.get_float("straight_max", 60.0)),
        arc_range=(reader.get_float("arc_min", 8.0),
                   reader.get_float("arc_max", 30.0)),
        shaping_exponent=reader.get_float("shaping_exponent", 2.0),
    )


def _image_config(reader: ConfigReader) -> ImageConfig:
    return ImageConfig(
        height=reader.get_int("image_height", 64),
        width=reader.get_int("image_width", 96),
        near_distance=reader.get_float("near_distance", 4.0),
        far_distance=reader.get_float("far_distance", 40.0),
        lane_half_width=reader.get_float("lane_half_width", 1.75),
        line_sigma_px=reader.get_float("line_sigma_px", 1.0),
        road_level=reader.get_float("road_level", 0.35),
        noise_std=reader.get_float("noise_std", 0.0),
    )


def cmd_dataset(args) -> int:
    t0 = time.monotonic()
    reader = ConfigReader(read_config_file(args.config), source=args.config)
    config = DatasetConfig(
        n_tracks=reader.get_int("tracks", required=True),
        samples_per_track=reader.get_int("samples_per_track", required=True),
        track=_track_config(reader),
        image=_image_config(reader),
    )
    config_seed = reader.get_int("seed", 0)
    seed = args.seed if args.seed is not None else config_seed
    reader.reject_unknown()
    manifest_path = args.out + ".manifest.json"
    _ensure_fresh([args.out, manifest_path], args.force)
    _ensure_parent(args.out)

    ds = build_dataset(seed, config)
    save_dataset(args.out, ds)
    manifest = RunManifest(command="dataset",
                           config={"seed": seed, "n_tracks": config.n_tracks,
                                   "samples_per_track": config.samples_per_track})
    manifest.add_input(args.config)
    manifest.add_output(args.out)
    manifest.wall_clock_seconds = time.monotonic() - t0
    manifest.write(manifest_path)
    print(f"dataset: {len(ds)} records -> {args.out}")
    return 0


def _stem(path: str) -> str:
    root, ext = os.path.splitext(path)
    return root if ext else path


def cmd_train(args) -> int:
    from .plots import save_loss_figure
    from .reports import write_trainlog

    t0 = time.monotonic()
    stem = _stem(args.out)
    outputs = [args.out, f"{stem}.trainlog.tsv", f"{stem}.loss.png"]
    manifest_path = f"{stem}.manifest.json"
    _ensure_fresh(outputs + [manifest_path], args.force)
    _ensure_parent(args.out)

    ds = load_dataset(args.dataset)
    tc = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                     epochs=args.epochs, run_seed=args.seed)
    kind = DropoutKind(args.dropout)
    epoch_offset = 0
    if args.resume is not None:
        if args.net_config is not None:
            raise ConfigError(
                "--net-config cannot be combined with --resume; the checkpoint "
                "fixes the architecture")
        net, header = load_network(args.resume)
        if tuple(net.config.input_shape) != tuple(ds.images.shape[1:]):
            raise ConfigError(
                f"checkpoint expects input {tuple(net.config.input_shape)} but the "
                f"dataset has {tuple(ds.images.shape[1:])}")
        net.conv_dropout_kind = kind
        epoch_offset = int(header.get("train.epochs_done", "0"))
    else:
        if args.net_config is not None:
            reader = ConfigReader(read_config_file(args.net_config), source=args.net_config)
            net_config = NetworkConfig(
                input_shape=tuple(ds.images.shape[1:]),
                conv_channels=reader.get_ints("conv_channels", (16, 24, 32, 48, 64)),
                conv_kernel=reader.get_int("conv_kernel", 5),
                conv_strides=reader.get_ints("conv_strides", (2, 1, 2, 1, 2)),
                fc_widths=reader.get_ints("fc_widths", (128, 64, 16, 1)),
                conv_keep_prob=reader.get_float("conv_keep_prob", 0.9),
                fc_keep_prob=reader.get_float("fc_keep_prob", 0.5),
            )
            reader.reject_unknown()
        else:
            net_config = NetworkConfig(input_shape=tuple(ds.images.shape[1:]))
        net = build_network(net_config, init_seed=derive_seed(args.seed, "init"),
                            conv_dropout_kind=kind)

    train_idx, val_idx = split_dataset(ds, args.val_fraction, seed=args.seed)
    log = train(net, ds.images[train_idx], ds.labels[train_idx], tc,
                ds.images[val_idx], ds.labels[val_idx], epoch_offset=epoch_offset)

    extra = dict(ds.image_config.to_header())
    extra["train.epochs_done"] = str(epoch_offset + args.epochs)
    save_network(args.out, net, extra_header=extra)
    write_trainlog(f"{stem}.trainlog.tsv", log)
    save_loss_figure(f"{stem}.loss.png", {kind.value: log})

    manifest = RunManifest(command="train",
                           config={"seed": args.seed, "dropout": kind.value,
                                   "epochs": args.epochs, "learning_rate": args.lr,
                                   "batch_size": args.batch_size,
                                   "val_fraction": args.val_fraction,
                                   "resumed_from": args.resume})
    manifest.add_input(args.dataset)
    for path in outputs:
        manifest.add_output(path)
    manifest.wall_clock_seconds = time.monotonic() - t0
    manifest.write(manifest_path)
    final = log.epochs[-1].train_mse if log.epochs else log.initial_train_mse
    print(f"train: {kind.value} dropout, initial mse {log.initial_train_mse:.6f}, "
          f"final mse {final:.6f} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .plots import save_binned_figure
    from .reports import write_table

    t0 = time.monotonic()
    net, _ = load_network(args.checkpoint)
    ds = load_dataset(args.dataset)
    if tuple(net.config.input_shape) != tuple(ds.images.shape[1:]):
        raise ConfigError(
            f"checkpoint expects input {tuple(net.config.input_shape)} but the "
            f"dataset has {tuple(ds.images.shape[1:])}")
    n = len(ds) if args.limit is None else min(args.limit, len(ds))
    if n < 1:
        raise ConfigError("eval needs at least one record")
    mc = McConfig(passes=args.passes, run_seed=args.seed)

    # Truths are standardized with the network's own scaler so the error
    # and the predictive variance live on the same scale.
    truths = net.scaler.transform(ds.labels[:n]) if net.scaler else ds.labels[:n]
    estimates = [estimate(net, ds.images[i],
                          McConfig(passes=args.passes,
                                   run_seed=derive_seed(args.seed, "record", i)),
                          input_id=str(i))
                 for i in range(n)]

    means = np.array([e.mean for e in estimates])
    variances = np.array([e.variance for e in estimates])
    mue = mean_uncertainty_error(truths, means, variances)

    if args.bin_range is not None:
        lo, hi = args.bin_range
    else:
        lo, hi = float(np.min(truths)), float(np.max(truths))
        if not hi > lo:
            hi = lo + 1.0
    report = binned_statistics(truths, estimates, uniform_edges(lo, hi, args.bins))

    os.makedirs(args.out_dir, exist_ok=True)
    binned_path = os.path.join(args.out_dir, "binned.tsv")
    summary_path = os.path.join(args.out_dir, "summary.tsv")
    figure_path = os.path.join(args.out_dir, "binned.png")
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    _ensure_fresh([binned_path, summary_path, figure_path, manifest_path], args.force)

    write_table(binned_path, BINNED_COLUMNS, report.rows())
    write_table(summary_path, ["metric", "value"], [
        ["records", n],
        ["passes", args.passes],
        ["mean_uncertainty_error", mue],
        ["mean_variance", float(np.mean(variances))],
        ["mse_of_mean", float(np.mean((means - truths) ** 2))],
    ])
    save_binned_figure(figure_path, report)

    manifest = RunManifest(command="eval",
                           config={"seed": args.seed, "passes": args.passes,
                                   "bins": args.bins, "records": n})
    manifest.add_input(args.checkpoint)
    manifest.add_input(args.dataset)
    for path in (binned_path, summary_path, figure_path):
        manifest.add_output(path)
    manifest.wall_clock_seconds = time.monotonic() - t0
    manifest.write(manifest_path)
    print(f"eval: {n} records, mue {mue:.4f} -> {args.out_dir}")
    return 0


def cmd_simulate(args) -> int:
    from .plots import save_simulation_figure
    from .reports import write_table

    t0 = time.monotonic()
    net, header = load_network(args.checkpoint)
    image_config = ImageConfig.from_header(header) if "image.height" in header else None
    track = generate_track(args.track_seed,
                           TrackConfig(total_length=args.track_length,
                                       kappa_max=args.kappa_max))
    human = make_human_source(args.human)
    fusion = FusionConfig(kappa=args.kappa)
    mc = McConfig(passes=args.passes, run_seed=args.seed)
    sim = SimConfig(ticks=args.ticks, dt=args.dt, speed=args.speed,
                    command_limit=args.kappa_max if args.kappa_max > 0 else 0.2)

    os.makedirs(args.out_dir, exist_ok=True)
    log_path = os.path.join(args.out_dir, "simlog.tsv")
    figure_path = os.path.join(args.out_dir, "sim.png")
    manifest_path = os.path.join(args.out_dir, "manifest.json")
    _ensure_fresh([log_path, figure_path, manifest_path], args.force)

    result = run_closed_loop(net, track, human, fusion, mc, sim, image_config)
    write_table(log_path, STEP_COLUMNS,
                [[r.tick, r.x, r.y, r.heading, r.u_net, r.u_human, r.variance,
                  r.sigma, r.u_blended, r.cross_track] for r in result.records])
    save_simulation_figure(figure_path, track, result)

    manifest = RunManifest(command="simulate",
                           config={"seed": args.seed, "track_seed": args.track_seed,
                                   "ticks": args.ticks, "passes": args.passes,
                                   "kappa": args.kappa, "human": args.human})
    manifest.add_input(args.checkpoint)
    for path in (log_path, figure_path):
        manifest.add_output(path)
    manifest.wall_clock_seconds = time.monotonic() - t0
    manifest.write(manifest_path)
    mean_cte = result.mean_abs_cross_track() if result.records else float("nan")
    print(f"simulate: {len(result.records)} ticks, status {result.status}, "
          f"mean |cross track| {mean_cte:.3f} -> {args.out_dir}")
    return 0


def cmd_serve(args) -> int:
    import asyncio

    from .control import SimulationSession
    from .service import LiveHuman, TelemetryService

    net, header = load_network(args.checkpoint)
    image_config = ImageConfig.from_header(header) if "image.height" in header else None
    track = generate_track(args.track_seed,
                           TrackConfig(total_length=args.track_length,
                                       kappa_max=args.kappa_max))
    live = None
    if args.human == "live":
        live = LiveHuman()
        human = live
    else:
        human = make_human_source(args.human)
    session = SimulationSession(
        net, track, human, FusionConfig(kappa=args.kappa),
        McConfig(passes=args.passes, run_seed=args.seed),
        SimConfig(ticks=0, dt=1.0 / args.tick_rate, speed=args.speed,
                  command_limit=args.kappa_max if args.kappa_max > 0 else 0.2),
        image_config)
    service = TelemetryService(session, tick_rate_hz=args.tick_rate, live_human=live)
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"--bind expects host:port, got {args.bind!r}")
    print(f"serving on ws://{host}:{port_text} "
          f"(human: {args.human}, track seed {args.track_seed})")
    try:
        asyncio.run(service.run(host, int(port_text),
                                ready=lambda p: print(f"listening on port {p}", flush=True)))
    except KeyboardInterrupt:
        print("interrupted, shutting down")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcsteer",
        description="Monte-Carlo dropout steering: data, training, uncertainty "
                    "reports, and shared-control simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("dataset", help="render a dataset of (frame, curvature) records")
    p.add_argument("--config", required=True, help="key = value generation config")
    p.add_argument("--out", required=True, help="output dataset path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(run=cmd_dataset)

    p = sub.add_parser("train", help="fit a steering network on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--net-config", default=None, help="key = value network geometry")
    p.add_argument("--dropout", choices=[k.value for k in DropoutKind],
                   default=DropoutKind.SPATIAL.value,
                   help="mask granularity on conv stages (default spatial)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resume", default=None, help="continue from a checkpoint")
    p.add_argument("--force", action="store_true")
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("eval", help="binned uncertainty report over a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--passes", "-T", type=int, default=20, help="stochastic passes")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bin-range", type=_float_pair, default=None,
                   metavar="LO,HI", help="bin range (default: label range)")
    p.add_argument("--limit", type=int, default=None, help="evaluate only the first N records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("simulate", help="closed-loop run on a generated track")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--track-seed", type=int, default=0)
    p.add_argument("--track-length", type=float, default=400.0)
    p.add_argument("--kappa-max", type=float, default=0.2, help="track curvature bound")
    p.add_argument("--ticks", type=int, default=400)
    p.add_argument("--dt", type=float, default=0.05)
    p.add_argument("--speed", type=float, default=5.0)
    p.add_argument("--kappa", type=float, default=1.0, help="handover gain")
    p.add_argument("--passes", "-T", type=int, default=20)
    p.add_argument("--human", default="none",
                   help="human source: none, perfect, or corrective")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("serve", help="live session over a websocket")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bind", default="127.0.0.1:8571", help="host:port to listen on")
    p.add_argument("--track-seed", type=int, default=0)
    p.add_argument("--track-length", type=float, default=400.0)
    p.add_argument("--kappa-max", type=float, default=0.2)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--passes", "-T", type=int, default=20)
    p.add_argument("--speed", type=float, default=5.0)
    p.add_argument("--tick-rate", type=float, default=10.0, help="ticks per second")
    p.add_argument("--human", default="live",
                   help="human source: live, none, perfect, or corrective")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_serve)
    return parser


def _float_pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except McsteerError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
