"""Physics-informed multi-source adversarial domain adaptation for seismic damage diagnosis."""
__version__ = "0.1.0"
