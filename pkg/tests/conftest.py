"""Shared pytest path setup; oracles.py lives alongside the tests."""
