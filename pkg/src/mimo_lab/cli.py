"""Command line front end.

Builds an ExperimentConfig from an optional JSON config file plus flag
overrides, runs the experiment, and reports the output paths.  Exit codes:
0 on success, 1 on numeric failure, 2 on usage or configuration errors.
"""

import argparse
import json
import sys

import numpy as np

from .experiments import (EXPERIMENTS, ConfigError, ExperimentConfig,
                          config_field_names, run)
from .scheduling import SearchBudgetError


def _number_list(text):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma separated list of numbers")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mimo-lab",
        description="Pilot reuse experiments for a single-cell massive MIMO system.")
    parser.add_argument("--config", metavar="PATH",
                        help="JSON file with ExperimentConfig fields; flags override it")
    parser.add_argument("--experiment", choices=sorted(EXPERIMENTS),
                        help="which experiment to run")
    parser.add_argument("--seed", type=int, help="RNG seed (required)")
    parser.add_argument("--trials", type=int, help="fading blocks or scenario count")
    parser.add_argument("--out", metavar="PATH", help="output CSV path")
    parser.add_argument("--snr-db", type=_number_list, metavar="LIST",
                        help="comma separated SNR grid in dB")
    parser.add_argument("--tau", type=int, help="pilot length in symbols")
    parser.add_argument("--T", type=_number_list, metavar="LIST",
                        help="coherence block length, or a comma list for the T sweep")
    parser.add_argument("--M", type=int, help="number of base station antennas")
    parser.add_argument("--K", type=int, help="number of user terminals")
    parser.add_argument("--as-deg", type=float, dest="as_deg",
                        help="angular spread in degrees")
    return parser


def _load_config_file(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config file: %s" % exc)
    except json.JSONDecodeError as exc:
        raise ConfigError("config file is not valid JSON: %s" % exc)
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    known = set(config_field_names())
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(unknown))
    for key in ("mean_aoas", "gains", "snr_db", "block_length_grid"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return data


def build_config(args):
    """Merge defaults, the config file, and the flag overrides."""
    merged = {}
    if args.config:
        merged.update(_load_config_file(args.config))
    overrides = {
        "experiment": args.experiment,
        "seed": args.seed,
        "trials": args.trials,
        "out": args.out,
        "snr_db": args.snr_db,
        "pilot_length": args.tau,
        "antenna_count": args.M,
        "user_count": args.K,
        "angular_spread_deg": args.as_deg,
    }
    if args.T is not None:
        lengths = tuple(int(t) for t in args.T)
        if len(lengths) == 1:
            overrides["block_length"] = lengths[0]
            overrides["block_length_grid"] = None
        else:
            overrides["block_length"] = max(lengths)
            overrides["block_length_grid"] = lengths
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**merged)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = build_config(args)
        config, results, csv_path, sidecar = run(config)
    except (FloatingPointError, OverflowError, SearchBudgetError,
            np.linalg.LinAlgError) as exc:
        print("numeric failure: %s" % exc, file=sys.stderr)
        return 1
    except (ConfigError, ValueError, NotImplementedError, TypeError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    rows = sum(len(r.sweep_values) for r in results)
    print("%s: %d metrics, %d rows" % (config.experiment, len(results), rows))
    print("wrote %s and %s" % (csv_path, sidecar))
    return 0


if __name__ == "__main__":
    sys.exit(main())
