"""
Parameters
Named model parameters with trainable flags, kept in one ordered store.
"""

import logging
from typing import Callable, Dict, Iterator, List, Mapping, Tuple

import numpy as np

from .errors import ContractError, SchemaError
from .tensor import Tensor

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """A leaf tensor owned by a ParameterStore. Frozen parameters get no gradient."""

    def __init__(self, data: np.ndarray, name: str, trainable: bool = True):
        super().__init__(data, requires_grad=trainable, dtype=data.dtype, name=name)

    @property
    def trainable(self) -> bool:
        return self.requires_grad

    @trainable.setter
    def trainable(self, value: bool) -> None:
        self.requires_grad = bool(value)
        if not value:
            self.grad = None


class ParameterStore:
    """
    Ordered map name -> Parameter.

    Names are unique and iteration follows registration order, so every walk
    over the store (optimizer, checkpoint, grad check) is deterministic.
    """

    def __init__(self):
        self._params: Dict[str, Parameter] = {}

    def register(self, name: str, data: np.ndarray, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise ContractError(f"parameter '{name}' registered twice")
        param = Parameter(data, name=name, trainable=trainable)
        self._params[name] = param
        return param

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> List[str]:
        return list(self._params)

    def items(self) -> List[Tuple[str, Parameter]]:
        return list(self._params.items())

    def values(self) -> List[Parameter]:
        return list(self._params.values())

    def trainable_items(self) -> List[Tuple[str, Parameter]]:
        return [(n, p) for n, p in self._params.items() if p.trainable]

    def trainable_names(self) -> List[str]:
        return [n for n, p in self._params.items() if p.trainable]

    def set_trainable(self, predicate: Callable[[str], bool]) -> None:
        """Mark exactly the parameters whose name satisfies ``predicate`` as trainable."""
        for name, param in self._params.items():
            param.trainable = predicate(name)

    def zero_grad(self) -> None:
        for param in self._params.values():
            param.zero_grad()

    def count(self, trainable_only: bool = False) -> int:
        """Number of scalar entries."""
        return int(sum(p.size for p in self._params.values() if p.trainable or not trainable_only))

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {n: p.shape for n, p in self._params.items()}

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state_dict(self, arrays: Mapping[str, np.ndarray]) -> None:
        """
        Copy arrays into the parameters in place.

        Raises:
            SchemaError: naming the first parameter (in store order) that is
                missing or whose shape differs. Nothing is modified in that case.
        """
        for name, param in self._params.items():
            if name not in arrays:
                raise SchemaError(f"checkpoint is missing tensor '{name}'")
            if tuple(arrays[name].shape) != param.shape:
                raise SchemaError(
                    f"tensor '{name}' has shape {tuple(arrays[name].shape)}, "
                    f"model expects {param.shape}"
                )
        extra = [n for n in arrays if n not in self._params]
        if extra:
            raise SchemaError(f"checkpoint has unexpected tensor '{extra[0]}'")
        for name, param in self._params.items():
            param.data[...] = arrays[name]
        logger.debug(f"Loaded {len(self._params)} parameter tensors")
