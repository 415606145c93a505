"""Per-epoch contraction of SVRG with the automatic constants.

For each ratio sigma/beta prints the mean of ||z_s - z*||^2 / ||z_{s-1} - z*||^2
over random quadratic problems, next to the guaranteed 1/2.

    python scripts/svrg_halving.py --ratios 0.5 0.1 0.02 --seeds 30
"""

import argparse
import sys
from dataclasses import dataclass, field

import numpy as np

from shrinkpca import (
    QuadraticProblem, SeededRng, ShiftedOperator, SvrgConfig, dense_eigendecompose, exact_solve,
    normalize_dataset, svrg_solve,
)


@dataclass
class HalvingConfig:
    ratios: list = field(default_factory=lambda: [0.5, 0.1, 0.02])
    seeds: int = 30
    epochs: int = 4
    d: int = 10
    n: int = 20


def problem(seed, ratio, d, n):
    r = np.random.default_rng(seed)
    data = normalize_dataset(r.normal(size=(n, d)))
    lam1 = dense_eigendecompose(data).lambda1
    rmax = float(data.row_norms_sq.max())
    lam = lam1
    for _ in range(500):
        lam = lam1 + ratio * max(lam, abs(lam - rmax))
    return QuadraticProblem(ShiftedOperator(data, lam), r.normal(size=d), lam - lam1)


def contraction(cfg: HalvingConfig, ratio: float):
    per_epoch = np.zeros(cfg.epochs)
    for s in range(cfg.seeds):
        prob = problem(s, ratio, cfg.d, cfg.n)
        z_star = exact_solve(prob, 1e-13).z
        errs = [float(z_star @ z_star)]
        svrg_solve(prob, SvrgConfig(SeededRng(s), T=cfg.epochs), z0=np.zeros(cfg.d),
                   callback=lambda k, z: errs.append(float(np.sum((z - z_star) ** 2))))
        errs = np.asarray(errs)
        per_epoch += errs[1:] / errs[:-1]
    return per_epoch / cfg.seeds


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.5, 0.1, 0.02])
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--epochs", type=int, default=4)
    ns = ap.parse_args(argv)
    cfg = HalvingConfig(ratios=ns.ratios, seeds=ns.seeds, epochs=ns.epochs)
    print("sigma/beta," + ",".join(f"epoch{k + 1}" for k in range(cfg.epochs)) + ",mean")
    for ratio in cfg.ratios:
        c = contraction(cfg, ratio)
        print(f"{ratio}," + ",".join(f"{v:.4g}" for v in c) + f",{c.mean():.4g}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
