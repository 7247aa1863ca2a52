"""varmech: a variational mechanics engine.

Symbolically derives Euler-Lagrange equations for first-order and
higher-order Lagrangians on Lie algebroids (tangent bundles and Lie
algebras included), solves the regular ones numerically, evaluates string
Euler-Lagrange residuals on bivector coordinates, and solves the graph
Plateau problem.  Every derived equation is cross-checked against an
independent discrete-action oracle.
"""

__version__ = "0.1.0"
