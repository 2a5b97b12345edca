"""fairgen: adaptive design-of-experiments data generation.

Detects under-covered regions of a dataset's standardized property space,
quantifies model uncertainty there with a deep ensemble of mixture density
networks, and uses Bayesian optimization to pick property targets whose
inverse designs fill the gaps.
"""

__version__ = "0.1.0"
