"""
Core functionality for pycellsleep.

Contains the network model, clustering, learning, diagnostics and the
experiment harness.
"""
