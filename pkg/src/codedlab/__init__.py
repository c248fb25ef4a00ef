"""codedlab: coded computing schemes, randomized sketches and a straggler simulator."""

__version__ = "0.1.0"
