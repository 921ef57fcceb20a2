"""Feedforward and tabular parametrizations with named output heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractViolation
from . import tape as ad
from .params import ParamStore

LOGIT_CLIP = 50.0


@dataclass
class NetSpec:
    """Shape of a policy network.

    ``heads`` maps head name to width; the final layer emits all heads side by
    side in insertion order. With ``tabular`` set, ``input_width`` is the
    number of states and the parameters are one row per state.
    """

    input_width: int
    hidden: tuple = (256, 256)
    activation: str = "relu"
    heads: dict = field(default_factory=dict)
    tabular: bool = False
    prefix: str = "net"

    @property
    def output_width(self) -> int:
        return int(sum(self.heads.values()))


def init_params(spec: NetSpec, rng: np.random.Generator, store: ParamStore | None = None) -> ParamStore:
    store = store if store is not None else ParamStore()
    if spec.tabular:
        store.add(f"{spec.prefix}.table", np.zeros((spec.input_width, spec.output_width)))
        return store
    widths = [spec.input_width, *spec.hidden, spec.output_width]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        store.add(f"{spec.prefix}.W{i}", rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        store.add(f"{spec.prefix}.b{i}", rng.uniform(-bound, bound, size=(fan_out,)))
    return store


def _get(store: ParamStore, tape, name):
    return tape.param(name) if tape is not None else store.view(name)


def _activation(spec: NetSpec):
    if spec.activation == "relu":
        return ad.relu
    if spec.activation in ("leaky-relu", "leaky_relu"):
        return ad.leaky_relu
    raise ContractViolation(f"unknown activation {spec.activation!r}")


def forward_eval(spec: NetSpec, store: ParamStore, inputs, tape: ad.Tape | None = None) -> dict:
    """Evaluate the network; returns ``{head: (B, width)}``.

    Tabular inputs may be integer state indices ``(B,)`` or one-hot rows
    ``(B, n_states)``. Passing a tape records the computation for
    :func:`opgfn.autodiff.tape.backward`.
    """
    inputs = np.asarray(inputs)
    if spec.tabular:
        table = _get(store, tape, f"{spec.prefix}.table")
        if inputs.ndim == 1 and np.issubdtype(inputs.dtype, np.integer):
            if inputs.size and (inputs.min() < 0 or inputs.max() >= spec.input_width):
                raise ContractViolation("tabular state index out of range")
            out = ad.getitem(table, inputs)
        else:
            if inputs.ndim != 2 or inputs.shape[1] != spec.input_width:
                raise ContractViolation(
                    f"expected one-hot width {spec.input_width}, got shape {inputs.shape}"
                )
            out = ad.matmul(inputs.astype(float), table)
    else:
        if inputs.ndim != 2 or inputs.shape[1] != spec.input_width:
            raise ContractViolation(f"expected input width {spec.input_width}, got shape {inputs.shape}")
        act = _activation(spec)
        h = inputs.astype(float)
        n_layers = len(spec.hidden) + 1
        for i in range(n_layers):
            h = ad.add(ad.matmul(h, _get(store, tape, f"{spec.prefix}.W{i}")), _get(store, tape, f"{spec.prefix}.b{i}"))
            if i < n_layers - 1:
                h = act(h)
        out = h
    heads = {}
    col = 0
    for name, width in spec.heads.items():
        heads[name] = ad.getitem(out, (slice(None), slice(col, col + width)))
        col += width
    return heads
