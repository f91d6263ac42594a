from .arrays import Float64Array, Int64Array

__all__ = ["Float64Array", "Int64Array"]
