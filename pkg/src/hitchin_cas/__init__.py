"""Abstract-index tensor algebra for Kähler families and the Hitchin connection."""
from .expr import TensorExpr, ExprError, alpha_canonicalize, conjugate, symmetrize, to_string
from .parser import parse, ParseError
from .scalar import ScalarPoly

__all__ = ["TensorExpr", "ExprError", "ParseError", "ScalarPoly", "parse", "to_string",
           "alpha_canonicalize", "conjugate", "symmetrize"]
__version__ = "0.1.0"
