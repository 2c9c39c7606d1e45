"""
modlearn: a small modular machine learning library.

Models, costs, training algorithms and datasets are separate objects that
meet through a symbolic expression graph, and whole experiments can be
written as YAML files (see :mod:`modlearn.dsl`).
"""

__version__ = "0.1.0"

from . import graph, rng, spaces  # noqa: E402

__all__ = ["graph", "rng", "spaces", "__version__"]
