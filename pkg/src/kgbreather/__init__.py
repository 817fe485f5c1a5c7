"""Polychromatic Klein-Gordon breathers: radial resolvents, ground states and bifurcation."""
