"""Context+Skill neuroevolution: networks, environments, NSGA-II training and generalization sweeps."""

__version__ = "0.1.0"
