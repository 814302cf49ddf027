"""Desk-scale CLT run: verify the gaussian config and write plot tables next to the report."""
import argparse
import sys
from pathlib import Path

from spike_spectra.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--config", default=str(ROOT / "configs" / "desk_gaussian.json"))
    p.add_argument("--out-dir", default="desk_output")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = out / "report.json"
    code = cli(["verify", "--config", args.config, "--out", str(report), "--workers", str(args.workers)])
    cli(["tables", "--report", str(report), "--out", str(out / "tables")])
    return code


if __name__ == "__main__":
    sys.exit(main())
