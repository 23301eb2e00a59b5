"""Label-efficiency toolkit for dialogue-act classification.

Measures per-instance informativeness of a training set via training
dynamics, and runs pool-based active-learning acquisition, either
simulated against stored gold labels or live against a human annotator.
"""

__version__ = "0.1.0"
