"""Goal recognition in grid navigation from plan-cost features."""

__version__ = "0.1.0"
