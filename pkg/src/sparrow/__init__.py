"""Jointly sparse frequency estimation from multiple measurement vectors.

The central object is the sparse vector of normalized signal row-norms:
support recovery needs only the sample covariance, the row-sparse signal
follows in closed form, and on uniform linear arrays the grid can be
dropped entirely in favor of a Toeplitz-parameterized semidefinite
program.  Baselines (mixed-norm solver, atomic-norm denoising, MUSIC,
covariance fitting) and a Monte-Carlo benchmark harness round out the
package.
"""

__version__ = "0.1.0"

from . import baselines, bench, conic, grid, gridless, model, numerics  # noqa: F401
