"""Reduced ordered algebraic/binary decision diagrams."""

from .manager import OPS, DiagramError, Manager, prime, unprime

__all__ = ["OPS", "DiagramError", "Manager", "prime", "unprime"]
