"""Almost flat bundles and quasi-representations on finite simplicial complexes."""

__version__ = "0.1.0"
