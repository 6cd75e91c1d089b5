"""The dense conic solver on programs with known answers.

Run: python3 demos/02_conic_solver.py
"""

import numpy as np

from aisac.conic import ConicProgram, dump_program, solve

# largest eigenvalue as a semidefinite program: max tr(HW), tr W <= P
H = np.array([[2.0, 1j], [-1j, 1.0]])
prog = ConicProgram()
W = prog.variable(2, "W")
prog.add_linear(W.trace(H))
prog.add_ge(3.0 - W.trace(), "power")
sol = solve(prog)
print(f"max tr(HW) = {sol.objective:.8f}, 3 * lambda_max = {3 * np.linalg.eigvalsh(H)[-1]:.8f}")
print("KKT residuals:", sol.kkt_residuals)
print(dump_program(prog))

# a square-root objective of the kind the quadratic transform produces
prog = ConicProgram()
x = prog.variable(1, "x")
prog.add_sqrt(x.trace(), 4.0)
prog.add_linear(x.trace(), -1.0)
sol = solve(prog)
print(f"max 4 sqrt(x) - x = {sol.objective:.8f} at x = {sol.values[0][0, 0].real:.6f} (expect 4 at 4)")

# a logarithmic term
prog = ConicProgram()
x = prog.variable(1, "x")
prog.add_log(x.trace() + 1.0, 3.0)
prog.add_linear(x.trace(), -1.0)
sol = solve(prog)
print(f"max 3 log(1 + x) - x at x = {sol.values[0][0, 0].real:.6f} (expect 2)")
