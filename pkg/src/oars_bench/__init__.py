"""Stateful defenses versus query-based black-box attacks, with adaptive rejection sampling."""
