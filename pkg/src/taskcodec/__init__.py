"""taskcodec: desk-scale multi-task learnable compression.

A base task (depth regression on a synthetic shapes world) is trained under a
rate-distortion objective with a small auxiliary input-reconstruction reward;
the resulting base representation is evaluated as direct input, as
side-information for conditional coding of secondary tasks, and against a
standalone (no side-information) variant.
"""

__version__ = "0.1.0"
