"""Flat parameter store with named slices, and its text checkpoint format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractViolation


@dataclass
class ParamStore:
    data: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slices: dict = field(default_factory=dict)  # name -> (start, stop, shape)

    @property
    def size(self) -> int:
        return int(self.data.shape[0])

    def add(self, name: str, array) -> None:
        if name in self.slices:
            raise ContractViolation(f"duplicate parameter slice {name!r}")
        array = np.asarray(array, dtype=float)
        start = self.size
        self.slices[name] = (start, start + array.size, array.shape)
        self.data = np.concatenate([self.data, array.ravel()])

    def view(self, name: str) -> np.ndarray:
        start, stop, shape = self.slices[name]
        return self.data[start:stop].reshape(shape)

    def names(self) -> list[str]:
        return list(self.slices)

    def copy(self) -> "ParamStore":
        return ParamStore(self.data.copy(), dict(self.slices))


def save_checkpoint(path, store: ParamStore, meta: dict) -> None:
    """Header lines ``# key: value`` then one parameter per line.

    Floats are written with ``repr`` which round-trips exactly.
    """
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    for name, (start, stop, shape) in store.slices.items():
        lines.append(f"# slice: {name} {start} {stop} {'x'.join(map(str, shape)) or 'scalar'}")
    lines.append("# values:")
    lines.extend(repr(float(v)) for v in store.data)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[ParamStore, dict]:
    meta: dict = {}
    slices: dict = {}
    values: list[float] = []
    in_values = False
    for line in Path(path).read_text().splitlines():
        if not in_values:
            if line == "# values:":
                in_values = True
                continue
            key, _, rest = line[2:].partition(": ")
            if key == "slice":
                name, start, stop, shape = rest.split(" ")
                dims = () if shape == "scalar" else tuple(int(s) for s in shape.split("x"))
                slices[name] = (int(start), int(stop), dims)
            else:
                meta[key] = rest
        elif line:
            values.append(float(line))
    data = np.array(values, dtype=float)
    if slices and max(stop for _, stop, _ in slices.values()) != data.size:
        raise ContractViolation(f"checkpoint {path} is truncated")
    if not all(math.isfinite(v) for v in values):
        raise ContractViolation(f"checkpoint {path} holds non-finite parameters")
    return ParamStore(data, slices), meta
