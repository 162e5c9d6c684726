"""Command line: ``nomasim {link,grantfree,calibrate} --config FILE --out CSV``."""
from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError
from .experiments import load_config, run_calibrate, run_grantfree_curve, run_link_curve
from .experiments.config import CalibrateConfig


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nomasim", description="NoMA link and grant-free simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("link", "BLER / goodput versus SNR"),
                        ("grantfree", "PDR versus packet arrival rate"),
                        ("calibrate", "run the oracle checks")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=(name != "calibrate"), help="YAML experiment config")
        s.add_argument("--out", required=True, help="CSV output path")
        s.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
        s.add_argument("--master-seed", type=int, default=None, help="override master_seed")
        if name == "calibrate":
            s.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.command == "calibrate" and args.config is None:
            cfg = CalibrateConfig(experiment="calibrate",
                                  **({} if args.master_seed is None else {"master_seed": args.master_seed}))
        else:
            cfg = load_config(args.config, args.command, args.master_seed)
    except (ConfigurationError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "link":
            rows = run_link_curve(cfg, args.out, args.workers)
            print(f"wrote {len(rows)} rows to {args.out}")
        elif args.command == "grantfree":
            rows, par = run_grantfree_curve(cfg, args.out, args.workers)
            print(f"wrote {len(rows)} rows to {args.out}")
            for r in par:
                print(f"supported PAR ({r['scheme']}, PDR <= {r['target_pdr']}): "
                      f"{r['supported_par']:.4g} in [{r['bracket_low']:.4g}, {r['bracket_high']:.4g}]")
            by = {r["scheme"]: r["supported_par"] for r in par}
            if by.get("ofdma_baseline"):
                print(f"NoMA / OFDMA supported PAR ratio: {by['noma'] / by['ofdma_baseline']:.3f}")
        else:
            rows = run_calibrate(cfg, args.out, args.inject_fault)
            for r in rows:
                print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: "
                      f"max deviation {r['max_deviation']:.3e} (tolerance {r['tolerance']:.0e})")
            if not all(r["passed"] for r in rows):
                return 1
    except ConfigurationError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
