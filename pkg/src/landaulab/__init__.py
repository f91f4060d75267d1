"""Velocity-space laboratory for the homogeneous Landau equation.

Very soft and Coulomb potentials (gamma in [-3, -2)): collision kernels,
mollified coefficients, a truncated velocity-grid discretization, the
linearized operator with its bounded/dissipative splitting, linear semigroup
decay experiments, and the close-to-equilibrium nonlinear solver.
"""

__version__ = "0.1.0"
