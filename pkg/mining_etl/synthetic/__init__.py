"""Deterministic synthetic markets and the brute-force oracles used in acceptance tests."""
