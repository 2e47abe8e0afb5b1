"""Null-space step decomposition, piece by piece.

A constrained step d solves the identity-Hessian KKT system

    [ I   J.T ] [ d ]     [ g ]
    [ J   0   ] [ y ] = - [ c ]

but it is cheaper (and, for the momentum methods, structurally necessary)
to build d from two orthogonal pieces: a normal step v toward the
linearized constraint manifold and a projected gradient step in null(J).
This script walks through the algebra numerically.
"""

import numpy as np

from projsqp import kkt_solve_direct, normal_step, project_null, projection_matrix

rng = np.random.default_rng(0)

# A random wide Jacobian: 3 constraints over 10 variables.
jac = rng.standard_normal((3, 10))
g = rng.standard_normal(10)
c = rng.standard_normal(3)

print("== the two components ==")
v = normal_step(jac, c, rho=1.0)
print("normal step v satisfies J v = -c:   residual",
      np.abs(jac @ v + c).max())

pg = project_null(jac, g)
print("projected gradient satisfies J Pg = 0: residual",
      np.abs(jac @ pg).max())
print("the components are orthogonal:      v . Pg =", abs(v @ pg))

print("\n== assembled step equals the direct KKT solve ==")
s, y = kkt_solve_direct(jac, g, c)
d = v - pg
print("||(v - Pg) - s|| =", np.linalg.norm(d - s))

print("\n== projecting the gradient first changes nothing ==")
# Because the projector is idempotent, feeding Pg instead of g into the
# KKT system leaves the step untouched (the multiplier does move).
s2, y2 = kkt_solve_direct(jac, project_null(jac, g), c)
print("step difference      ||s - s2|| =", np.linalg.norm(s - s2))
print("multiplier difference ||y - y2|| =", np.linalg.norm(y - y2), "(not zero!)")

print("\n== the projector itself ==")
p = projection_matrix(jac)
print("symmetry  ||P - P.T||  =", np.abs(p - p.T).max())
print("idempotence ||P^2 - P|| =", np.abs(p @ p - p).max())
print("rank (trace) =", round(np.trace(p), 6), "= n - m =", 10 - 3)
