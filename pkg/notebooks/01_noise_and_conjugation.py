"""
Levy noise, the stationary OU process and the conjugacy
=======================================================

A symmetric 1.5-stable path drives everything below.  We sample it on a
two-sided grid, build the stationary Ornstein-Uhlenbeck process ``z`` it
induces, and check that solving the linear Marcus equation
``dx = x dt + x <> dL`` through the random-ODE conjugacy reproduces the
closed form ``x0 exp(t + L(t))``.
"""

import numpy as np

from levyfoliation import (StableParams, TimeGrid, example5_system, generate_two_sided_path,
                           marcus_linear_solution, solve_original, stationary_z,
                           sublinear_growth_report)
from levyfoliation.rds import State

# the path lives on [-100, 10]; the OU window starts 40 later, at -60
grid = TimeGrid(-100.0, 10.0, 1e-3)
path = generate_two_sided_path(StableParams(alpha=1.5, seed=0), grid)
print("L(0) =", path(0.0), " L(5) =", round(path(5.0), 4))

ou = stationary_z(path, burn_in=40.0)
print("OU window:", ou.grid.t_min, "to", ou.grid.t_max)
print("z(0) =", round(ou.z0, 4), " I(5) =", round(ou.integral_at(5.0), 4))

# largest jump in the window: heavy tails show up as isolated big steps
inc = path.increments()
k = int(np.argmax(np.abs(inc)))
print(f"largest increment {inc[k]:+.3f} at t = {path.times[k]:.3f}")

# conjugacy check on the x-equation of the example-5 system (f = 0 there)
spec = example5_system()
orbit = solve_original(spec, ou, State(np.array([1.3]), np.array([0.0])), 0.0, 5.0)
exact = marcus_linear_solution(1.0, path, 1.3, orbit.times)
rel = np.max(np.abs(orbit.x[:, 0] - exact) / np.abs(exact))
print(f"max relative error vs Marcus closed form on [0, 5]: {rel:.2e}")

# I(T)/T tends to zero, but slowly: at these horizons it is still a
# heavy-tailed variable of size about T^(-1/3)
long_path = generate_two_sided_path(StableParams(1.5, seed=1), TimeGrid(-840.0, 800.0, 1e-3))
rep = sublinear_growth_report(stationary_z(long_path))
for T, r in zip(rep.horizons, rep.integral_ratios):
    print(f"  T = {T:5.0f}   max |I(+-T)| / T = {r:.4f}")
