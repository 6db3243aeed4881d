"""
Unstable fibers and manifold of the example-5 model
===================================================

The model ``dx = x dt + x <> dL``, ``dy = (-y + eps |x|) dt + y <> dL`` has
closed-form fibers ``l(xi) = y0 + eps/2 (|xi| - |x0|)`` and manifold
``h(xi) = eps/2 |xi|``.  We compute them with the Lyapunov-Perron solver and
compare.  With ``eps = 1`` the gap condition fails, so the solver has to be
told to iterate anyway; with ``eps = 0.2`` and ``eta = 0`` the theory applies.
"""

import warnings

import numpy as np

from levyfoliation import (LPParams, example5_oracle, example5_system, fiber_lipschitz_bound,
                           gap_condition, parallelism_check, unstable_fiber, unstable_manifold)
from levyfoliation.levy_path import StableParams, TimeGrid, generate_two_sided_path
from levyfoliation.ou import stationary_z
from levyfoliation.rds import State

path = generate_two_sided_path(StableParams(1.5, seed=3), TimeGrid(-100.0, 10.0, 1e-3))
ou = stationary_z(path)
xi = np.linspace(-3, 3, 13)[:, None]

print("gap at eps=1, eta=0.5:", gap_condition(1, -1, 1.0, 0.5))
print("gap at eps=0.2, eta=0:", gap_condition(1, -1, 0.2, 0.0))

# eps = 1 needs the override; the warning is expected here
with warnings.catch_warnings():
    warnings.simplefilter("ignore", RuntimeWarning)
    prm = LPParams(gap_override=True)
    base = State(np.array([1.0]), np.array([0.0]))
    fib = unstable_fiber(example5_system(), ou, base, xi, prm)
    man = unstable_manifold(example5_system(), ou, xi, prm)

l_exact, h_exact = example5_oracle(1.0, 0.0, xi[:, 0])
print("\n  xi      l(xi)    exact     h(xi)    exact")
for k in range(0, 13, 2):
    print(f"{xi[k, 0]:5.1f}  {fib.values[k, 0]:8.5f} {l_exact[k]:8.5f}  "
          f"{man.values[k, 0]:8.5f} {h_exact[k]:8.5f}")
print("Picard sweeps:", fib.iterations, " h(0) =", man.value_at_origin())

# inside the theorem: eps = 0.2 with eta = 0
spec = example5_system(0.2)
prm = LPParams(eta=0.0)
f1 = unstable_fiber(spec, ou, State(np.array([1.0]), np.array([0.0])), xi, prm)
f2 = unstable_fiber(spec, ou, State(np.array([1.0]), np.array([1.0])), xi, prm)
m = unstable_manifold(spec, ou, xi, prm)
rep = parallelism_check(f1, f2, m)
print("\n" + rep.line())
print("offsets from the manifold:", rep.details["p"], rep.details["q"])
print("Lipschitz estimate of a fiber:", round(f1.lipschitz_estimate(), 4),
      " a-priori bound:", round(fiber_lipschitz_bound(1, -1, spec.K, 0.0), 4))
