"""LCC correlation energy of P decoupled fragments against P times one fragment,
plus the third-order gap |E_c - E_MP2| under coupling halvings."""
import argparse

from exsparse.lcc import lcc_solve
from exsparse.model import ModelConfig, build_lattice, decoupled_fragments


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-sites", type=int, default=3)
    ap.add_argument("--m", type=int, default=2)
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args()
    cfg = ModelConfig(n_sites=args.n_sites, t_hop=0.2, U=1.0, lambda_cd=0.2, lambda_dd=0.1,
                      R_c=2.0, R_loc=1.0)
    e1 = None
    print(f"{'P':>2} {'E_c':>20} {'E_c - P E_c(1)':>16} {'iters':>6}")
    for P in (1, 2, 4, 8):
        I = decoupled_fragments(cfg, P)
        _, rep = lcc_solve(I, I.spec(args.m), tol=args.tol)
        e1 = rep.E_c if e1 is None else e1
        print(f"{P:>2} {rep.E_c:20.14f} {rep.E_c - P * e1:16.2e} {rep.iterations:>6}")
    print()
    print(f"{'lambda':>7} {'E_c':>16} {'E_MP2':>16} {'|E_c - E_MP2|':>14} {'ratio':>6}")
    prev = None
    base = ModelConfig(n_sites=6, t_hop=0.2, U=1.0, lambda_cd=0.2, lambda_dd=0.1, R_c=2.0,
                       R_loc=1.0)
    for lam in (0.8, 0.4, 0.2, 0.1, 0.05):
        I = build_lattice(base.scaled(lam))
        _, rep = lcc_solve(I, I.spec(args.m), tol=1e-13)
        gap = abs(rep.E_c - rep.E_mp2)
        ratio = f"{prev / gap:6.1f}" if prev else f"{'':>6}"
        print(f"{lam:7.3f} {rep.E_c:16.10f} {rep.E_mp2:16.10f} {gap:14.3e} {ratio}")
        prev = gap


if __name__ == "__main__":
    main()
