from typing import Any, Callable

import numpy as np
from pydantic_core import core_schema


class _NDArray(np.ndarray):
    """numpy array usable as a pydantic field; serialised to nested lists in JSON."""

    dtype_: np.dtype = np.dtype(np.float64)

    @classmethod
    def __get_pydantic_core_schema__(
        cls,
        _source_type: Any,
        _handler: Callable[[Any], core_schema.CoreSchema],
    ) -> core_schema.CoreSchema:
        return core_schema.json_or_python_schema(
            json_schema=core_schema.no_info_plain_validator_function(cls._coerce),
            python_schema=core_schema.no_info_plain_validator_function(cls._coerce),
            serialization=core_schema.plain_serializer_function_ser_schema(
                lambda x: np.asarray(x).tolist(), when_used="json"
            ),
        )

    @classmethod
    def _coerce(cls, value: Any) -> np.ndarray:
        array = np.asarray(value)
        if array.dtype != cls.dtype_:
            if cls.dtype_.kind == "i" and array.size and array.dtype.kind == "f":
                if not np.all(np.isfinite(array)) or np.any(array != np.round(array)):
                    raise ValueError("expected integer values")
            array = array.astype(cls.dtype_)
        return array


class Int64Array(_NDArray):
    dtype_ = np.dtype(np.int64)


class Float64Array(_NDArray):
    dtype_ = np.dtype(np.float64)
