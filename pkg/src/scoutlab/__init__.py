"""scoutlab: goal-driven discovery campaign engine.

Maintains a staged, mergeable findings memory, values candidate hypotheses
with a surrogate, selects them with a UCB acquisition rule, evaluates them
in a sandboxed harness (or against a synthetic concept landscape), and
promotes validated findings. Ships a CLI (`scoutlab`) and an HTTP control
API for human supervision.
"""

__version__ = "0.1.0"
