"""Graph contrastive learning with an adversarial view and a stabilizing regularizer."""

__version__ = "0.1.0"
