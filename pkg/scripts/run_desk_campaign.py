"""Run the desk-scale tap-count ablation and print the summary table.

    python3 scripts/run_desk_campaign.py [OUT_DIR] [--seed N] [--workers N]

Interrupted runs resume from OUT_DIR.
"""
import argparse
import sys

from gustrl.cli import main

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", nargs="?", default="runs/desk")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    code = main(["-v", "campaign", "--preset", "desk", "--out", a.out, "--seed", str(a.seed),
                 "--workers", str(a.workers)])
    if code == 0:
        code = main(["metrics", a.out])
    sys.exit(code)
