"""Axially symmetric, finite-mass, finite-radius steady states of the
gravitational Vlasov-Poisson system, built by Newton continuation on a
radial-ray deformation of a spherical polytropic base state."""

__version__ = "0.1.0"
