"""Type annotations as graph data: B-graphs, annotation, constraints and type-change repair."""

__version__ = "0.1.0"
