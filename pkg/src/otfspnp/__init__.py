"""Delay-Doppler receiver laboratory.

Channel estimation and symbol detection for zero-padded OTFS frames with a
unified plug-and-play ADMM solver, analytic and trained denoisers, classical
baselines, and a seeded Monte-Carlo harness.
"""

__version__ = "0.1.0"
