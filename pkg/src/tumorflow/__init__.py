"""Penalized fixed-box simulator for a multiphase tumor growth model."""
