"""Potential theory on the flat torus: d-infinity transport, Riesz kernels, energies."""

__version__ = "0.1.0"
