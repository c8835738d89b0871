"""Pydantic domain types for the mixed-state branching engine"""
