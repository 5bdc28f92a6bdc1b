"""Kernel-chain index, subelliptic loss and cost exponent across the symbol catalogue."""

import argparse
from dataclasses import dataclass
from pathlib import Path

from hypoctrl.io import write_csv
from hypoctrl.lr_cost import LRParams
from hypoctrl.phase_space import catalogue_symbol, hamilton_map, singular_space


@dataclass
class Config:
    k0_max: int = 7
    out: Path = Path("results/catalogue.csv")


def main(cfg: Config) -> None:
    rows = []
    for k0 in range(cfg.k0_max + 1):
        q = catalogue_symbol(k0)
        rep = singular_space(hamilton_map(q))
        e = LRParams(1, 1, 0.5, 1, 2 * rep.k0 + 1, 1).exponent_fraction()
        rows.append([k0, q.n, rep.k0, str(rep.delta_loss), str(e), " ".join(map(str, rep.chain_dims))])
        print(f"k0={k0}: n={q.n} measured k0={rep.k0} delta={rep.delta_loss} cost exponent={e}")
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(cfg.out, ["k0_target", "n", "k0", "delta", "cost_exponent", "chain_dims"], rows)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k0-max", type=int, default=Config.k0_max)
    ap.add_argument("--out", type=Path, default=Config.out)
    a = ap.parse_args()
    main(Config(a.k0_max, a.out))
