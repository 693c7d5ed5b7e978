"""Core numerics for squidsim."""
