"""
Kernel expansions, ridge estimates and representer bases
========================================================

The drift is written as a sum of Gaussian kernel sections centred at the
observations.  A ridge penalty gives the MAP weights in closed form; the
same machinery with integral functionals gives representer bases computed
by quadrature.
"""

import numpy as np
from scipy import special

from driftlearn.evaluation import default_mse_grid, mse_grid
from driftlearn.randdist import RngStream
from driftlearn.rkhs import (
    MatrixKernel,
    ScalarKernel,
    integral_operator_functionals,
    representer_basis_quadrature,
    ridge_map_estimate,
)
from driftlearn.sde import builtin_model, euler_maruyama_simulate

model = builtin_model("double_well")
traj = euler_maruyama_simulate(model, [0.5], 0.05, 800, RngStream(1))
kernel = MatrixKernel.scalar_times_identity(1)

# MAP weights for a few ridge strengths; the diffusion is held at its true value
grid = default_mse_grid(traj.states)
inner = default_mse_grid(traj.states, trim=0.01)
for ridge in (0.01, 1.0, 100.0):
    exp = ridge_map_estimate(traj, kernel, model, ridge, x0=traj.states[0])
    print(f"ridge {ridge:7.2f}: MSE {mse_grid(exp.evaluate, model.drift, grid):.3f}, "
          f"interior MSE {mse_grid(exp.evaluate, model.drift, inner):.3f}, "
          f"|beta|_max {np.abs(exp.weights).max():.2f}")

# the fit is good where the path spends time and drifts to zero beyond it
exp = ridge_map_estimate(traj, kernel, model, 1.0, x0=traj.states[0])
for x in (-2.5, -1.0, 0.0, 1.0, 2.5):
    print(f"  b({x:+.1f}) true {model.drift(np.array([[x]]))[0, 0]:+7.2f}  fit {exp.evaluate(np.array([[x]]))[0, 0]:+7.2f}")

# representer of the functional f -> int_0^1 f(z) dz, evaluated at 0
basis = representer_basis_quadrature(ScalarKernel(), [np.ones_like], (0.0, 1.0), 1001)
print(f"representer at 0: {basis([0.0])[0, 0]:.6f} (erf form {np.sqrt(np.pi / 2) * special.erf(1 / np.sqrt(2)):.6f})")

# a small Fredholm problem: recover f from y_i = int exp(-|x_i - z|) f(z) dz
xs = np.linspace(0, 1, 10)
funcs = integral_operator_functionals(lambda x, z: np.exp(-np.abs(x - z)), xs)
basis = representer_basis_quadrature(ScalarKernel(), funcs, (0.0, 1.0), 401)
y = np.array([f(np.linspace(0, 1, 2001)) @ np.full(2001, 1 / 2000) for f in funcs])
coef = basis.fit(y, 1e-6)
u = np.linspace(0, 1, 5)
print("Fredholm fit of f = 1 at", u, "->", np.round(basis.predict(u, coef), 3))
