"""Compare the training modes on the desk benchmark over a few seeds.

Usage: python demos/ablation_sweep.py [n_seeds]
"""

import sys
from pathlib import Path

import numpy as np

from leosplit import load_config, run_experiment

CFG = Path(__file__).resolve().parents[1] / "configs" / "desk.cfg"


def main(n_seeds: int = 3) -> None:
    base = load_config(CFG)
    print(f"{'mode':<18}{'final acc (mean)':>18}{'per seed':>30}")
    for mode in ("leo-split", "fixed-threshold", "no-aai", "no-am"):
        accs = [run_experiment(base.replace(mode=mode, seed=s))[-1].test_acc for s in range(n_seeds)]
        print(f"{mode:<18}{np.mean(accs):>18.4f}{str(np.round(accs, 3)):>30}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 3)
