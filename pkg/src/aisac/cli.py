"""Command line entry point.

Exit codes: 0 success, 1 internal error, 2 infeasible configuration,
3 malformed configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .beamforming import InfeasibleError
from .experiment import (TRAJECTORY_MODES, ExperimentSpec, default_scenario, desk_scale,
                         infeasible, parse_sweep, run, shrink_to_desk, thread_cap)
from .scenario import ConfigError, config_from_json
from .trajectory import BEAMFORMING_MODES

EXIT_OK, EXIT_INTERNAL, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("aisac")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="aisac", description="Joint UAV trajectory and ISAC beamforming runs.")
    p.add_argument("--config", help="JSON scenario file (powers in dBm, gains in dB)")
    p.add_argument("--policy", default="none",
                   help="sensing policy: none | adaptive | fixed:<k> | every-slot (or 1-4)")
    p.add_argument("--trajectory", default="opt-outer",
                   help=f"comma list from {', '.join(TRAJECTORY_MODES)}")
    p.add_argument("--beamforming", default="optimized", choices=BEAMFORMING_MODES)
    p.add_argument("--sweep", help="<axis>=<v1,v2,...> with axis period, grid, antennas or policy")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="seed for UE placement and random beamforming")
    p.add_argument("--dump-beamformers", action="store_true",
                   help="write every slot's beamformers as re,im text")
    p.add_argument("--desk-scale", action="store_true",
                   help="shrink to an 8 x 8 grid with 4 antennas")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _scenario(args):
    seed = 0 if args.seed is None else args.seed
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if args.seed is not None:
            data["rng_seed"] = args.seed
        cfg = config_from_json(data)
        return shrink_to_desk(cfg) if args.desk_scale else cfg
    if args.desk_scale:
        return desk_scale(seed)
    cfg = default_scenario()
    return cfg.replace(rng_seed=seed, ue_positions=None) if args.seed is not None else cfg


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        spec = ExperimentSpec(
            scenario=_scenario(args), policy=args.policy, trajectory=args.trajectory,
            beamforming=args.beamforming, sweep=parse_sweep(args.sweep), out=args.out,
            seed=0 if args.seed is None else args.seed,
            dump_beamformers=args.dump_beamformers, threads=thread_cap())
    except (_UsageError, ConfigError, ValueError, TypeError, OSError,
            json.JSONDecodeError) as exc:
        print(f"aisac: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        results = run(spec)
    except (ConfigError, InfeasibleError) as exc:
        print(f"aisac: infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001 - reported as an internal failure
        log.exception("internal error")
        print(f"aisac: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    # baselines do not enforce QoS, so only optimized runs can prove infeasibility
    if spec.beamforming == "optimized" and infeasible(results):
        print("aisac: infeasible configuration: a trajectory has no feasible slot",
              file=sys.stderr)
        return EXIT_INFEASIBLE
    for pr in results:
        for tr in pr.trajectories:
            label = "" if pr.value is None else f"{pr.axis}={pr.value} "
            print(f"{label}{tr.scheme}: average throughput {tr.average_throughput:.6g} bit/s/Hz")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
