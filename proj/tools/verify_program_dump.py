#!/usr/bin/env python3
"""Re-solve a dumped conic program with cvxpy and compare objectives.

Exit codes: 0 objectives agree, 77 cvxpy unavailable, 1 disagreement or
solver failure.
"""

import argparse
import json
import sys


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--program", required=True, help="program dump (JSON)")
    parser.add_argument("--expect", required=True, type=float,
                        help="objective value to reproduce")
    parser.add_argument("--tol", type=float, default=1e-5,
                        help="relative tolerance on the objective")
    args = parser.parse_args()

    try:
        import cvxpy as cp
        import numpy as np
    except ImportError as exc:
        print(f"cvxpy unavailable: {exc}")
        return 77

    with open(args.program, "r", encoding="utf-8") as handle:
        doc = json.load(handle)

    if doc.get("format") != "conic-program":
        print(f"unexpected dump format: {doc.get('format')!r}")
        return 1

    n = int(doc["num_scalars"])
    x = cp.Variable(n)
    constraints = []

    for row in doc["equalities"]:
        expr = sum(term["coeff"] * x[term["index"]] for term in row["terms"])
        constraints.append(expr == row["rhs"])

    def dense(dim, entries):
        mat = np.zeros((dim, dim))
        for e in entries:
            mat[e["row"], e["col"]] = e["value"]
            mat[e["col"], e["row"]] = e["value"]
        return mat

    for block in doc["psd_blocks"]:
        dim = int(block["dim"])
        expr = cp.Constant(dense(dim, block["constant"]))
        for coeff in block["coefficients"]:
            expr = expr + x[coeff["index"]] * dense(dim, coeff["entries"])
        constraints.append(expr >> 0)

    objective = sum(term["coeff"] * x[term["index"]]
                    for term in doc["objective"]["terms"])

    problem = cp.Problem(cp.Minimize(objective), constraints)
    value = None
    for solver, options in (("CLARABEL", {}),
                            ("SCS", {"eps": 1e-9, "max_iters": 200000})):
        if solver not in cp.installed_solvers():
            continue
        try:
            problem.solve(solver=solver, **options)
        except cp.error.SolverError as exc:
            print(f"{solver} failed: {exc}")
            continue
        if problem.status in ("optimal", "optimal_inaccurate"):
            value = problem.value
            print(f"{solver}: status {problem.status}, objective {value:.9g}")
            break
        print(f"{solver}: status {problem.status}")

    if value is None:
        print("no installed solver produced an optimum")
        return 1

    gap = abs(value - args.expect)
    limit = args.tol * max(1.0, abs(args.expect))
    print(f"expected {args.expect:.9g}, gap {gap:.3g}, limit {limit:.3g}")
    if gap > limit:
        print("objective mismatch")
        return 1
    print("objectives agree")
    return 0


if __name__ == "__main__":
    sys.exit(main())
