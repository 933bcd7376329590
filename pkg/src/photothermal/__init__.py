"""Photothermal resonance and heating toolkit."""
