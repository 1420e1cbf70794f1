"""Self-similar algebraic spiral solutions of the 2-D incompressible Euler equations."""

__version__ = "0.1.0"
