"""Print the m=3, D=3 resource table (both power conventions) and optionally save JSON."""
import argparse
import json

from exsparse.estimator import render_table, table_one


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=3)
    ap.add_argument("--D", type=int, default=3)
    ap.add_argument("--json", help="write the table to this path")
    args = ap.parse_args()
    tab = table_one(args.m, args.D)
    print(render_table(tab), end="")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(tab, fh, indent=2, sort_keys=True)
            fh.write("\n")


if __name__ == "__main__":
    main()
