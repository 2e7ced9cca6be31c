"""
CLI module for pycellsleep.

Contains the command-line interface definitions and handlers.
"""
