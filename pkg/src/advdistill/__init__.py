"""Adversarial feature distillation for a small one-stage detector."""

__version__ = "0.1.0"
