"""Experiment dispatch."""
