"""Nelson-type stochastic mechanics reconstructed from Schrodinger evolution.

Subpackages by role: ``fields`` (grids and discrete calculus),
``schrodinger`` (reference solver and field extraction), ``sampler``
(path ensembles), ``info`` (entropies and Fisher information), ``verify``
(equation residuals), ``variational`` (Lagrangians and stationarity) and
``runner``/``cli`` (configured runs).
"""

__version__ = "0.1.0"
