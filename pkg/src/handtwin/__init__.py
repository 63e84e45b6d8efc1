"""Digital twin of an 18-DoF leadscrew-actuated anthropomorphic hand."""

__version__ = "0.1.0"
