"""Command-line interface.

Verbs: run <config>, preset <name>, compare <config>..., verify, certify <config>.
Exit codes: 0 success, 1 config error, 2 divergence, 3 verification failure.
"""

from __future__ import annotations

import argparse
import sys

from . import harness

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_VERIFY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cgtsim",
        description="Decentralized gradient tracking with communication compression.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config", help="path to a config file")
    p_run.add_argument("--out", default=None, help="output directory")

    p_preset = sub.add_parser("preset", help="run a named preset (or list them)")
    p_preset.add_argument("name", nargs="?", default=None, help="preset name")
    p_preset.add_argument("--out", default=None, help="output directory")
    p_preset.add_argument("--list", action="store_true", help="list available presets")
    p_preset.add_argument("--k", type=int, default=None, help="override iteration count")
    p_preset.add_argument("--seed", type=int, default=None, help="override problem seed")

    p_cmp = sub.add_parser("compare", help="run several configs and merge their traces")
    p_cmp.add_argument("configs", nargs="+", help="config files sharing problem and topology")
    p_cmp.add_argument("--out", default=None, help="output directory")
    p_cmp.add_argument("--prefix", default="compare", help="merged CSV name")

    sub.add_parser("verify", help="run the invariant verification suite")

    p_cert = sub.add_parser("certify", help="compute a convergence certificate for a config")
    p_cert.add_argument("config", help="path to a config file")
    p_cert.add_argument("--out", default=None, help="output directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            cfg = harness.parse_config_file(args.config)
            outcome = harness.run_experiment(cfg, out_dir=args.out)
            print(outcome.summary)
            print(f"trace: {outcome.csv_path}")
            if outcome.cert_path is not None:
                print(f"certificate: {outcome.cert_path}")
            return EXIT_DIVERGED if outcome.diverged else EXIT_OK

        if args.verb == "preset":
            if args.list or args.name is None:
                print(harness.preset_listing())
                return EXIT_OK
            cfg = harness.preset(args.name, K=args.k, seed=args.seed)
            outcome = harness.run_experiment(cfg, out_dir=args.out)
            print(outcome.summary)
            print(f"trace: {outcome.csv_path}")
            return EXIT_DIVERGED if outcome.diverged else EXIT_OK

        if args.verb == "compare":
            cfgs = [harness.parse_config_file(path) for path in args.configs]
            path = harness.compare(cfgs, out_dir=args.out, prefix=args.prefix)
            print(f"merged trace: {path}")
            return EXIT_OK

        if args.verb == "verify":
            checks = harness.verify_suite()
            print(harness.verify_report(checks))
            return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY

        if args.verb == "certify":
            cfg = harness.parse_config_file(args.config)
            report = harness.certificate_report(cfg)
            out = harness.default_out_dir(args.out)
            out.mkdir(parents=True, exist_ok=True)
            path = out / f"{cfg.prefix}.cert.txt"
            path.write_text(report)
            print(report, end="")
            print(f"certificate: {path}")
            return EXIT_OK
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(f"unhandled verb {args.verb!r}")


if __name__ == "__main__":
    sys.exit(main())
