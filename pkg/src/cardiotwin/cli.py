"""Command line entry points.

Subcommands:

- simulate     run the wearable fleet and record raw/outcome logs
- net          build or inspect classifier params
- run          execute a scenario (live, replay or eval)
- report       join predictions with outcomes and write the metrics bundle
- demo-server  live run with a pinned local probability, for console work

Log level comes from CARDIOTWIN_LOG_LEVEL (default INFO).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import CardioTwinError
from .pipeline import ScenarioConfig, export_report, run_scenario, simulate_to_dir
from .scaling import ScalingCoeffs, ScalingConfig
from .telemetry import FleetConfig


def _setup_logging() -> None:
    level = os.environ.get("CARDIOTWIN_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cardiotwin")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the simulated fleet, write frame logs")
    sim.add_argument("--devices", type=int, default=4)
    sim.add_argument("--ticks", type=int, default=200)
    sim.add_argument("--tick-ms", type=int, default=1000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--drop-rate", type=float, default=0.0)
    sim.add_argument("--out", required=True, help="output directory")

    net = sub.add_parser("net", help="build, train or inspect classifier params")
    net.add_argument("--phi", type=float, default=0.0)
    net.add_argument("--alpha", type=float, default=1.2)
    net.add_argument("--beta", type=float, default=1.1)
    net.add_argument("--gamma", type=float, default=1.15)
    net.add_argument("--seed", type=int, default=0)
    net.add_argument("--params-out", help="save params to this path")
    net.add_argument("--params-in", help="load and describe params from this path")
    net.add_argument("--train-samples", type=int, default=0,
                     help="train on this many synthetic samples before saving")
    net.add_argument("--epochs", type=int, default=15)
    net.add_argument("--lr", type=float, default=0.2)

    run = sub.add_parser("run", help="execute a scenario")
    run.add_argument("--config", help="scenario config JSON")
    run.add_argument("--mode", choices=("live", "replay", "eval"))
    run.add_argument("--seed", type=int)
    run.add_argument("--serve", help="host:port for the console endpoints")
    run.add_argument("--raw-in", help="recorded frame log for replay mode")
    run.add_argument("--outcomes-in", help="recorded outcome log")
    run.add_argument("--params-in", help="classifier params file")
    run.add_argument("--out", help="output directory")

    rep = sub.add_parser("report", help="join predictions with outcomes, write metrics")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--out", dest="out_dir", required=True)
    rep.add_argument("--plots", action="store_true")

    demo = sub.add_parser("demo-server", help="live run with a pinned local probability")
    demo.add_argument("--serve", default="127.0.0.1:8760")
    demo.add_argument("--devices", type=int, default=3)
    demo.add_argument("--ticks", type=int, default=100000)
    demo.add_argument("--tick-ms", type=int, default=1000)
    demo.add_argument("--seed", type=int, default=0)
    demo.add_argument("--p-local", type=float, default=0.8)
    demo.add_argument("--alpha", type=float, default=0.5,
                      help="fusion weight on the local model")
    demo.add_argument("--out", default="demo_out")
    demo.add_argument("--static-dir", help="serve console assets from this directory")
    return parser


def _cmd_simulate(args) -> int:
    fleet = FleetConfig(
        device_count=args.devices,
        horizon_ticks=args.ticks,
        tick_ms=args.tick_ms,
        seed=args.seed,
        drop_rate=args.drop_rate,
    )
    result = simulate_to_dir(fleet, args.out)
    print(json.dumps(result["counts"], indent=2, sort_keys=True))
    return 0


def _cmd_net(args) -> int:
    from .net import ScaledNet

    if args.params_in:
        net = ScaledNet.load(args.params_in)
        doc = {
            "config": net.config.to_json(),
            "resolution": net.arch.resolution,
            "params": net.param_count(),
            "macs": net.mac_count(),
        }
        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0

    config = ScalingConfig(
        phi=args.phi,
        coeffs=ScalingCoeffs(args.alpha, args.beta, args.gamma),
    )
    net = ScaledNet(config, seed=args.seed)
    if args.train_samples > 0:
        from .datasets import split, xor_patches
        from .net import accuracy, fit

        x, y = xor_patches(args.train_samples, resolution=net.arch.resolution,
                           channels=net.arch.in_channels, seed=args.seed)
        x_tr, y_tr, x_te, y_te = split(x, y, seed=args.seed)
        fit(net, x_tr, y_tr, epochs=args.epochs, lr=args.lr, seed=args.seed,
            eval_set=(x_te, y_te), verbose=True)
        print(f"held-out accuracy: {accuracy(net, x_te, y_te):.4f}")
    if args.params_out:
        net.save(args.params_out)
        print(f"params written to {args.params_out}")
    else:
        print(json.dumps({
            "resolution": net.arch.resolution,
            "params": net.param_count(),
            "macs": net.mac_count(),
        }, indent=2, sort_keys=True))
    return 0


def _cmd_run(args) -> int:
    if args.config:
        config = ScenarioConfig.load(args.config)
    else:
        config = ScenarioConfig()
    # Flags override the config document field by field.
    updates = {}
    if args.mode is not None:
        updates["mode"] = args.mode
    if args.seed is not None:
        updates["seed"] = args.seed
        updates["fleet"] = FleetConfig(
            device_count=config.fleet.device_count,
            horizon_ticks=config.fleet.horizon_ticks,
            tick_ms=config.fleet.tick_ms,
            seed=args.seed,
            neighbor_map=config.fleet.neighbor_map,
            patient_profiles=config.fleet.patient_profiles,
            drop_rate=config.fleet.drop_rate,
            max_attempts=config.fleet.max_attempts,
        )
    if args.serve is not None:
        updates["serve"] = args.serve
    if args.raw_in is not None:
        updates["raw_in"] = args.raw_in
    if args.outcomes_in is not None:
        updates["outcomes_in"] = args.outcomes_in
    if args.params_in is not None:
        updates["params_in"] = args.params_in
    if args.out is not None:
        updates["out_dir"] = args.out
    if updates:
        import dataclasses

        config = dataclasses.replace(config, **updates)
    report = run_scenario(config)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


def _cmd_report(args) -> int:
    summary = export_report(args.in_dir, args.out_dir, plots=args.plots)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _cmd_demo_server(args) -> int:
    from .fusion import FusionConfig

    config = ScenarioConfig(
        mode="live",
        fleet=FleetConfig(
            device_count=args.devices,
            horizon_ticks=args.ticks,
            tick_ms=args.tick_ms,
            seed=args.seed,
        ),
        fusion=FusionConfig(alpha=args.alpha),
        out_dir=args.out,
        seed=args.seed,
        serve=args.serve,
        static_dir=args.static_dir,
        fixed_p_local=args.p_local,
    )
    report = run_scenario(config)
    print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "net": _cmd_net,
    "run": _cmd_run,
    "report": _cmd_report,
    "demo-server": _cmd_demo_server,
}


def main(argv=None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except CardioTwinError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
