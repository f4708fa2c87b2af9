"""Multi-depot UAV delivery fleet: simulation, policies and planning bounds."""
__version__ = "0.1.0"
