"""Vector co-Buchi ranking functions and vector closure certificates for
discrete-time polynomial systems, synthesized by sum-of-squares programming."""

__version__ = "0.1.0"
