"""Gelfand-Shilov exponent of the KFP propagator as a function of the fitting window.

Slow (a few minutes per window at N=30); use --N to trade accuracy for time.
"""

import argparse
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from hypoctrl.hermite import HermiteTruncation, assemble_weyl, gelfand_shilov_profile
from hypoctrl.io import write_csv
from hypoctrl.phase_space import kfp_symbol


@dataclass
class Config:
    N: int = 30
    windows: list = field(
        default_factory=lambda: [
            [0.15, 0.2, 0.25, 0.3, 0.4, 0.5],
            [0.2, 0.3, 0.4, 0.5, 0.6],
            [0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        ]
    )
    out: Path = Path("results/gs_windows.csv")


def main(cfg: Config) -> None:
    op = assemble_weyl(kfp_symbol(1.0), HermiteTruncation(2, cfg.N))
    rows = []
    for w in cfg.windows:
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gs = gelfand_shilov_profile(op, w, 1)
        rows.append([w[0], w[-1], gs.exponent, gs.exponent_raw, int(gs.truncation_warning), time.perf_counter() - t0])
        print(f"[{w[0]}, {w[-1]}]: exponent {gs.exponent:.3f} (raw {gs.exponent_raw:.3f})")
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out, ["t_min", "t_max", "exponent", "exponent_raw", "truncation_warning", "seconds"], rows)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--N", type=int, default=Config.N)
    ap.add_argument("--out", type=Path, default=Config.out)
    a = ap.parse_args()
    main(Config(N=a.N, out=a.out))
