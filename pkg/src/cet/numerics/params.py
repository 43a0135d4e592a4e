"""Named container for trainable arrays, with a freeze contract."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import ContractViolation, ShapeError
from .tensor import Tensor


def _matches(name: str, prefixes) -> bool:
    return any(name == p or name.startswith(p + ".") for p in prefixes)


class ParamStore:
    """Ordered mapping ``name -> Tensor`` holding every trainable weight.

    Frozen arrays are marked read-only at the numpy level as well, so an
    accidental in-place write fails loudly instead of silently mutating a
    frozen encoder.
    """

    def __init__(self, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self._tensors: OrderedDict[str, Tensor] = OrderedDict()
        self._frozen: set[str] = set()
        self.meta: dict[str, str] = {}

    # mapping protocol
    def __getitem__(self, name) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name) -> bool:
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def names(self, prefixes=None) -> list[str]:
        if prefixes is None:
            return list(self._tensors)
        return [n for n in self._tensors if _matches(n, prefixes)]

    def items(self):
        return self._tensors.items()

    def add(self, name: str, array) -> Tensor:
        if name in self._tensors:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(array, dtype=self.dtype), requires_grad=True, name=name)
        self._tensors[name] = t
        return t

    def remove(self, name: str):
        self._frozen.discard(name)
        del self._tensors[name]

    # freezing
    def freeze(self, prefixes):
        for n in self.names(prefixes):
            self._frozen.add(n)
            t = self._tensors[n]
            t.requires_grad = False
            t.grad = None
            t.data.flags.writeable = False

    def unfreeze(self, prefixes=None):
        for n in self.names(prefixes):
            if n in self._frozen:
                self._frozen.discard(n)
                t = self._tensors[n]
                t.data = t.data.copy()
                t.requires_grad = True

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def trainable_names(self, prefixes=None) -> list[str]:
        return [n for n in self.names(prefixes) if n not in self._frozen]

    def assign(self, name: str, array):
        """Replace a parameter's values; frozen parameters refuse."""
        if name in self._frozen:
            raise ContractViolation(f"write to frozen parameter {name!r}")
        t = self._tensors[name]
        array = np.asarray(array, dtype=self.dtype)
        if array.shape != t.shape:
            raise ShapeError(f"assign {name!r}: expected shape {t.shape}, got {array.shape}")
        t.data = array

    # gradients
    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def grads(self, names=None) -> dict:
        names = self.trainable_names() if names is None else names
        return {n: self._tensors[n].grad for n in names}

    # copies
    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self._tensors.items()}

    def load_snapshot(self, snap: dict):
        for n, arr in snap.items():
            self.assign(n, arr)

    def clone(self, dtype=None) -> "ParamStore":
        out = ParamStore(self.dtype if dtype is None else dtype)
        for n, t in self._tensors.items():
            out.add(n, t.data)
        out.meta = dict(self.meta)
        return out

    def num_values(self) -> int:
        return sum(t.size for t in self._tensors.values())
