"""regsent: regional sentiment analytics toolkit.

Batch pipeline for geolocated micro-post corpora: normalization, supervised
sentiment classification with pseudo-labeling, per-region aggregation with
before/after shift tests, and OLS modelling of a regional outcome with
stepwise-AIC predictor selection.
"""

__version__ = "0.1.0"
