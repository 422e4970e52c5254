"""Domain-adaptation smoke classification at desk scale: procedural
two-domain corpora, a from-scratch differentiable training engine with
gradient reversal and correlation alignment, and an experiment CLI."""

__version__ = "0.1.0"
