"""Support growth of A^k e_mu0 for (m, D) in {1,2} x {1,2}; prints fitted volume exponents
and writes one CSV trace per case."""
import argparse
from pathlib import Path

from exsparse.bse import bse_handle
from exsparse.cli import _probe_start, probe_side
from exsparse.lightcone import Aborted, cost_ratio, fit_volume_exponent, probe
from exsparse.model import ModelConfig, build_lattice

CASES = {(1, 1): 14, (2, 1): 8, (1, 2): 8, (2, 2): 4}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="lightcone_traces")
    ap.add_argument("--Rc", type=float, default=1.0)
    ap.add_argument("--max-support", type=int, default=2_000_000)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"{'m':>2} {'D':>2} {'d':>3} {'sites':>6} {'nnz':>9} {'exponent':>9} {'2mD':>4} {'cost':>5}")
    for (m, D), d in CASES.items():
        n = probe_side(m, D, args.Rc, d)
        I = build_lattice(ModelConfig(D=D, n_sites=n, R_c=args.Rc, R_loc=min(1.0, args.Rc)))
        try:
            tr = probe(bse_handle(I, m), _probe_start(I, m, None), d,
                       max_support=args.max_support)
        except Aborted as exc:
            tr = exc.trace
        tr.to_csv(out / f"trace_m{m}_D{D}.csv")
        try:
            fit = f"{fit_volume_exponent(tr).exponent:9.2f}"
        except ValueError:
            fit = f"{'n/a':>9}"
        print(f"{m:>2} {D:>2} {tr.d:>3} {n:>6} {tr.nnz[-1]:>9} {fit} {2 * m * D:>4} "
              f"{cost_ratio(tr):5.2f}")


if __name__ == "__main__":
    main()
