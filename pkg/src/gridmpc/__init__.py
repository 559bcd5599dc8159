"""Model predictive frequency control for small multi-area power systems.

The package bundles the pieces needed to reproduce battery-based frequency
control studies end to end: swing-equation grid models with battery storage,
an exact zero-order-hold discretization, a dense active-set QP solver, MPC
controllers with optional passivity and Lyapunov-based stability add-ons, a
conventional droop/AGC baseline, a fixed-step closed-loop simulator with
configurable fault generators, and metric/sweep reporting with a CLI front
end.
"""

__version__ = "0.1.0"
