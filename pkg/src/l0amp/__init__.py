"""Solvers and asymptotic theory for noiseless compressed sensing with an l0 penalty.

The package has three layers:

* finite-size iterative solvers (AMP with hard thresholding, proximal gradient
  descent, LASSO and Bayes-optimal AMP baselines, approximate survey propagation
  ASP and its simplified variant ASPo),
* deterministic state-evolution trackers for each solver family, and
* replica saddle-point analysis (RS and 1RSB free energies, complexity, adaptive
  Parisi parameter, stability diagnostics) together with phase-diagram drivers.

Everything is deterministic given a seed; the CLI in :mod:`l0amp.cli` exposes the
workflows with CSV output.
"""

__version__ = "0.1.0"

ARTIFACT_VERSION = "l0amp/0.1.0"
