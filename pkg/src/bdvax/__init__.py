"""Behavior-and-demography epidemic model and vaccine allocation lab."""
