"""AST-graph neural code retrieval engine."""

__version__ = "0.1.0"
