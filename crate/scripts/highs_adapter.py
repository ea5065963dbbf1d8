#!/usr/bin/env python3
"""Runs HiGHS on an LP file and writes the normalized solution format.

Usage: highs_adapter.py --model M.lp --solution OUT [--time-limit S] [--warm FILE]
"""
import argparse
import math
import sys

import highspy


def read_values(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if len(parts) == 2:
                values[parts[0]] = float(parts[1])
    return values


def fmt(v):
    return repr(float(v))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", required=True)
    ap.add_argument("--solution", required=True)
    ap.add_argument("--time-limit", type=float, default=math.inf)
    ap.add_argument("--warm")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", args.threads)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", 1e-9)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if math.isfinite(args.time_limit):
        h.setOptionValue("time_limit", max(args.time_limit, 0.01))
    if h.readModel(args.model) == highspy.HighsStatus.kError:
        sys.exit("cannot read model " + args.model)

    lp = h.getLp()
    names = list(lp.col_names_)
    if args.warm:
        warm = read_values(args.warm)
        sol = highspy.HighsSolution()
        sol.col_value = [warm.get(n, lo) for n, lo in zip(names, lp.col_lower_)]
        sol.value_valid = True
        h.setSolution(sol)

    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    has_sol = info.primal_solution_status == 2
    if ms == highspy.HighsModelStatus.kModelEmpty:
        with open(args.solution, "w") as out:
            out.write("status optimal\nobjective 0.0\nbound 0.0\n")
        return
    if ms == highspy.HighsModelStatus.kOptimal:
        status = "optimal"
    elif ms in (highspy.HighsModelStatus.kInfeasible,):
        status = "infeasible"
    elif has_sol:
        status = "feasible"
    else:
        status = "timeout"

    with open(args.solution, "w") as out:
        out.write("status %s\n" % status)
        if has_sol:
            out.write("objective %s\n" % fmt(info.objective_function_value))
        bound = info.mip_dual_bound
        if status == "optimal" and not math.isfinite(bound):
            bound = info.objective_function_value
        if math.isfinite(bound):
            out.write("bound %s\n" % fmt(bound))
        if has_sol:
            values = h.getSolution().col_value
            for n, v in zip(names, values):
                out.write("%s %s\n" % (n, fmt(v)))


if __name__ == "__main__":
    main()
