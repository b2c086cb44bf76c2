"""Geodesic random walks on Finsler manifolds and their limit generators."""
from . import atlas, geodesics, generator, geometry, measures, rng, walk, zoo
from .errors import FinslerWalkError

__version__ = "0.1.0"

__all__ = ["atlas", "geodesics", "generator", "geometry", "measures", "rng", "walk", "zoo", "FinslerWalkError", "__version__"]
