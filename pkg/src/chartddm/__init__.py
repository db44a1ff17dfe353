"""Overlapping-chart Schwarz finite elements on Riemannian manifolds."""
