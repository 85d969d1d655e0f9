#!/usr/bin/env python3
"""Run the four boundary-flux control experiments and print their summaries.

Unconstrained runs (1A, 2A) use conjugate-gradient descent; constrained runs
enforce the mean-energy level exactly by rescaling (1B) or approximately by
tangent-space projection (2B).  Outputs land in out/<kind>/.
"""

import sys
from pathlib import Path

from adjopt.cli import run_experiment
from adjopt.config import emit_builtin_config, parse_config_text, validate_config


def run(kind: str, **overrides):
    raw = parse_config_text(emit_builtin_config(kind))
    raw.update({k: str(v) for k, v in overrides.items()})
    cfg = validate_config(raw)
    summary = run_experiment(cfg, Path("out") / kind)
    print(f"[{kind}] " + "  ".join(f"{k}={v}" for k, v in summary.items()))


def main():
    iters = int(sys.argv[1]) if len(sys.argv) > 1 else 200
    for kind in ("opt-heat-1A", "opt-heat-1B", "opt-heat-2A", "opt-heat-2B"):
        run(kind, **{"descent.max_iters": iters})


if __name__ == "__main__":
    main()
