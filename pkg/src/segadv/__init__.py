"""Targeted adversarial perturbations for semantic segmentation.

Generates, applies, and evaluates iterative sign-gradient attacks that
erase one class from a segmentation network's prediction, against a
built-in trainable fully-convolutional network or any model reachable
through the oracle wire protocol.
"""

__version__ = "0.1.0"
