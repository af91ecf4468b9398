"""
Simulating the double-well SDE and scoring paths
================================================

Euler-Maruyama paths, their exact one-step Gaussian likelihood, and what
happens when a step size is too coarse for the drift.
"""

import numpy as np

from driftlearn.errors import DivergenceError
from driftlearn.randdist import RngStream
from driftlearn.sde import builtin_model, constant_diffusion_model, em_path_loglik, euler_maruyama_simulate

model = builtin_model("double_well")
traj = euler_maruyama_simulate(model, [0.5], 0.05, 800, RngStream(1))
x = traj.states[:, 0]
print(f"m={traj.m} steps, T={traj.times[-1]:.1f}, range [{x.min():.2f}, {x.max():.2f}]")

# the two wells sit at -1 and 1; count the time spent on each side
print(f"fraction of time with x > 0: {np.mean(x > 0):.3f}")
counts, edges = np.histogram(x, bins=12)
for c, lo in zip(counts, edges):
    print(f"  {lo:6.2f} {'#' * (c // 8)}")

# log-likelihood of the path under the true drift versus a zero drift
true_ll = em_path_loglik(traj, model)
zero = em_path_loglik(traj, constant_diffusion_model(lambda z: np.zeros_like(z), 1.0))
print(f"log-likelihood, true drift {true_ll:.1f} vs zero drift {zero:.1f}")

# a step of 0.9 with strong noise sends the cubic drift off to infinity
loud = builtin_model("double_well", {"sigma": 5.0})
try:
    euler_maruyama_simulate(loud, [0.5], 0.9, 100, RngStream(0))
except DivergenceError as err:
    print("diverged:", err)
