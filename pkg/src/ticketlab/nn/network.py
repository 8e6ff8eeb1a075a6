"""Network specification, parameters, initialization, forward/backward.

A network is an ordered trunk of named layer groups followed by one or
more named heads. The last trunk group is the backbone boundary; every
head consumes the backbone output. Parameter ids are strings of the
form ``"<group>/<layer index>/<weight|bias>"`` and enumerate in a fixed
deterministic order (trunk groups first, then heads in declared order).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

import numpy as np

from ticketlab.errors import (
    AlignmentError,
    ContractError,
    NumericsError,
    ShapeError,
    SpecError,
)
from ticketlab.nn import layers as L

_LAYER_KINDS = ("dense", "conv2d", "relu", "maxpool2x2", "flatten")

_INIT_STREAM = 0xA11


@dataclass(frozen=True)
class LayerSpec:
    """One layer in a group. Use the constructor helpers below."""

    kind: str
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0

    def __post_init__(self):
        if self.kind not in _LAYER_KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.kind == "dense":
            if self.in_features < 1 or self.out_features < 1:
                raise SpecError("dense needs in_features and out_features >= 1")
        elif self.kind == "conv2d":
            if self.in_channels < 1 or self.out_channels < 1:
                raise SpecError("conv2d needs channel counts >= 1")
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise SpecError(f"conv2d kernel must be odd >= 1, got {self.kernel}")

    @property
    def has_params(self) -> bool:
        return self.kind in ("dense", "conv2d")


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def conv2d(in_channels: int, out_channels: int, kernel: int) -> LayerSpec:
    return LayerSpec(
        "conv2d", in_channels=in_channels, out_channels=out_channels, kernel=kernel
    )


def relu() -> LayerSpec:
    return LayerSpec("relu")


def maxpool2x2() -> LayerSpec:
    return LayerSpec("maxpool2x2")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def output_shape(layer: LayerSpec, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape (without batch axis) produced by `layer` on `in_shape`."""
    k = layer.kind
    if k == "dense":
        if in_shape != (layer.in_features,):
            raise SpecError(f"dense({layer.in_features}) cannot consume {in_shape}")
        return (layer.out_features,)
    if k == "conv2d":
        if len(in_shape) != 3 or in_shape[0] != layer.in_channels:
            raise SpecError(
                f"conv2d(in={layer.in_channels}) cannot consume {in_shape}"
            )
        return (layer.out_channels, in_shape[1], in_shape[2])
    if k == "relu":
        return in_shape
    if k == "maxpool2x2":
        if len(in_shape) != 3 or in_shape[1] % 2 or in_shape[2] % 2:
            raise SpecError(f"maxpool2x2 needs even (C,H,W), got {in_shape}")
        return (in_shape[0], in_shape[1] // 2, in_shape[2] // 2)
    if k == "flatten":
        if not in_shape:
            raise SpecError("flatten needs a non-empty shape")
        return (int(np.prod(in_shape)),)
    raise SpecError(f"unknown layer kind {k!r}")


@dataclass(frozen=True)
class GroupSpec:
    """A named, ordered list of layers. Groups are the unit of pruning
    scope and of transfer mappings."""

    name: str
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.name or "/" in self.name:
            raise SpecError(f"bad group name {self.name!r}")
        if not self.layers:
            raise SpecError(f"group {self.name!r} has no layers")
        object.__setattr__(self, "layers", tuple(self.layers))


@dataclass(frozen=True)
class HeadSpec:
    """A named head: its own ordered groups, consuming the backbone output."""

    name: str
    groups: tuple[GroupSpec, ...]

    def __post_init__(self):
        if not self.name:
            raise SpecError("head needs a name")
        if not self.groups:
            raise SpecError(f"head {self.name!r} has no groups")
        object.__setattr__(self, "groups", tuple(self.groups))


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable network description.

    input_shape: shape of one sample, e.g. (3, 32, 32).
    trunk: shared groups executed in order; the last one is the backbone
        boundary named by `backbone`.
    heads: one or more task heads, each consuming the backbone output.
    """

    input_shape: tuple[int, ...]
    trunk: tuple[GroupSpec, ...]
    heads: tuple[HeadSpec, ...]
    backbone: str = ""

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "trunk", tuple(self.trunk))
        object.__setattr__(self, "heads", tuple(self.heads))
        if not self.trunk:
            raise SpecError("network needs at least one trunk group")
        if not self.heads:
            raise SpecError("network needs at least one head")
        if not self.backbone:
            object.__setattr__(self, "backbone", self.trunk[-1].name)
        names = [g.name for g in self.trunk]
        for h in self.heads:
            names.extend(g.name for g in h.groups)
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate group names in {names}")
        if self.backbone != self.trunk[-1].name:
            raise SpecError(
                "backbone must name the last trunk group "
                f"({self.trunk[-1].name!r}), got {self.backbone!r}"
            )
        if len({h.name for h in self.heads}) != len(self.heads):
            raise SpecError("duplicate head names")
        layer_plan(self)  # chains shapes; raises SpecError on any mismatch

    def head(self, name: str) -> HeadSpec:
        for h in self.heads:
            if h.name == name:
                return h
        raise SpecError(f"no head named {name!r} (have {[h.name for h in self.heads]})")

    def group_names(self) -> tuple[str, ...]:
        names = [g.name for g in self.trunk]
        for h in self.heads:
            names.extend(g.name for g in h.groups)
        return tuple(names)


@dataclass(frozen=True)
class PlanEntry:
    """One executed layer position with resolved shapes and param ids."""

    group: str
    head: str | None  # None for trunk groups
    index: int  # position within the group
    layer: LayerSpec
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]

    @property
    def weight_id(self) -> str:
        return f"{self.group}/{self.index}/weight"

    @property
    def bias_id(self) -> str:
        return f"{self.group}/{self.index}/bias"


@functools.lru_cache(maxsize=64)
def layer_plan(net: NetworkSpec) -> tuple[PlanEntry, ...]:
    """Resolve every layer of every group with input/output shapes.

    Trunk entries come first, then each head's entries in declared
    order. Raises SpecError if any layer cannot consume its input.
    """
    entries: list[PlanEntry] = []
    shape = net.input_shape
    for g in net.trunk:
        for i, layer in enumerate(g.layers):
            out = output_shape(layer, shape)
            entries.append(PlanEntry(g.name, None, i, layer, shape, out))
            shape = out
    backbone_shape = shape
    for h in net.heads:
        shape = backbone_shape
        for g in h.groups:
            for i, layer in enumerate(g.layers):
                out = output_shape(layer, shape)
                entries.append(PlanEntry(g.name, h.name, i, layer, shape, out))
                shape = out
    return tuple(entries)


def head_plan(net: NetworkSpec, head: str) -> tuple[PlanEntry, ...]:
    """Executed path for one head: trunk entries + that head's entries."""
    net.head(head)
    return tuple(
        e for e in layer_plan(net) if e.head is None or e.head == head
    )


def param_shape(entry: PlanEntry) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(weight shape, bias shape) of a parameterized plan entry."""
    layer = entry.layer
    if layer.kind == "dense":
        return (layer.in_features, layer.out_features), (layer.out_features,)
    if layer.kind == "conv2d":
        k = layer.kernel
        return (layer.out_channels, layer.in_channels, k, k), (layer.out_channels,)
    raise SpecError(f"{layer.kind} has no parameters")


def param_ids(net: NetworkSpec) -> tuple[str, ...]:
    ids: list[str] = []
    for e in layer_plan(net):
        if e.layer.has_params:
            ids.append(e.weight_id)
            ids.append(e.bias_id)
    return tuple(ids)


class ParameterSet:
    """Ordered mapping from parameter id to a float32 C-order ndarray.

    Enforces dtype, contiguity and finiteness on construction. Arrays
    are owned: mutate them in place through normal numpy ops (the
    optimizer does), or call copy() for an independent snapshot.
    """

    __slots__ = ("_data",)

    def __init__(self, items: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]]):
        data: dict[str, np.ndarray] = {}
        pairs = items.items() if isinstance(items, Mapping) else items
        for pid, arr in pairs:
            arr = np.asarray(arr)
            if arr.dtype != np.float32:
                raise ContractError(f"{pid}: parameters must be float32, got {arr.dtype}")
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            if not np.isfinite(arr).all():
                raise NumericsError(f"{pid}: non-finite values in parameter tensor")
            data[pid] = arr
        self._data = data

    def __getitem__(self, pid: str) -> np.ndarray:
        return self._data[pid]

    def __contains__(self, pid: str) -> bool:
        return pid in self._data

    def __iter__(self) -> Iterator[str]:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def keys(self):
        return self._data.keys()

    def items(self):
        return self._data.items()

    def values(self):
        return self._data.values()

    def ids(self) -> tuple[str, ...]:
        return tuple(self._data)

    def copy(self) -> "ParameterSet":
        return ParameterSet({pid: arr.copy() for pid, arr in self._data.items()})

    def total_elements(self) -> int:
        return sum(arr.size for arr in self._data.values())

    def bit_equal(self, other: "ParameterSet") -> bool:
        """Exact bit-level equality (distinguishes -0.0, unlike ==)."""
        if self.ids() != other.ids():
            return False
        return all(
            self._data[pid].tobytes() == other._data[pid].tobytes()
            for pid in self._data
        )

    def __repr__(self) -> str:
        return f"ParameterSet({len(self._data)} tensors, {self.total_elements()} elements)"


def init_network(net: NetworkSpec, seed: int) -> ParameterSet:
    """Seeded initialization.

    Weights are uniform in [-b, b] with b = sqrt(6 / (fan_in + fan_out));
    conv fans count kernel area (fan_in = Cin*k*k, fan_out = Cout*k*k).
    Biases start at zero. Draw order follows parameter-id order, so the
    result is bit-reproducible for a given seed.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, _INIT_STREAM))))
    out: dict[str, np.ndarray] = {}
    for e in layer_plan(net):
        if not e.layer.has_params:
            continue
        wshape, bshape = param_shape(e)
        if e.layer.kind == "dense":
            fan_in, fan_out = e.layer.in_features, e.layer.out_features
        else:
            k2 = e.layer.kernel**2
            fan_in, fan_out = e.layer.in_channels * k2, e.layer.out_channels * k2
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        out[e.weight_id] = rng.uniform(-bound, bound, wshape).astype(np.float32)
        out[e.bias_id] = np.zeros(bshape, dtype=np.float32)
    return ParameterSet(out)


@dataclass
class ForwardCache:
    """Single-use record of one forward pass, consumed by backward()."""

    net: NetworkSpec
    head: str
    entries: tuple[PlanEntry, ...]
    records: list = field(default_factory=list)
    out_shape: tuple[int, ...] = ()
    consumed: bool = False


def forward(
    net: NetworkSpec,
    params: Mapping[str, np.ndarray],
    inputs: np.ndarray,
    head: str,
):
    """Run the trunk and the named head. Returns (outputs, cache).

    inputs: (batch, *net.input_shape), float32 or float64.
    """
    x = np.asarray(inputs)
    if x.ndim != len(net.input_shape) + 1 or x.shape[1:] != net.input_shape:
        raise ShapeError(
            f"inputs must be (batch, {net.input_shape}), got {x.shape}"
        )
    if x.dtype not in (np.float32, np.float64):
        raise ShapeError(f"inputs must be float32/float64, got {x.dtype}")
    cache = ForwardCache(net=net, head=head, entries=head_plan(net, head))
    for e in cache.entries:
        kind = e.layer.kind
        if kind == "dense":
            x, ctx = L.dense_forward(x, params[e.weight_id], params[e.bias_id])
        elif kind == "conv2d":
            x, ctx = L.conv2d_forward(x, params[e.weight_id], params[e.bias_id])
        elif kind == "relu":
            x, ctx = L.relu_forward(x)
        elif kind == "maxpool2x2":
            x, ctx = L.maxpool2x2_forward(x)
        else:
            x, ctx = L.flatten_forward(x)
        cache.records.append(ctx)
    if not np.isfinite(x).all():
        raise NumericsError("non-finite network outputs")
    cache.out_shape = x.shape
    return x, cache


def backward(cache: ForwardCache, dout: np.ndarray) -> dict[str, np.ndarray]:
    """Backpropagate a loss gradient through a cached forward pass.

    Returns gradients keyed by parameter id, covering exactly the
    executed path (trunk + the head that ran). The cache is single-use;
    a second call raises ContractError.
    """
    if cache.consumed:
        raise ContractError("forward cache already consumed; rerun forward()")
    d = np.asarray(dout)
    if d.shape != cache.out_shape:
        raise ShapeError(f"loss grad shape {d.shape} != output shape {cache.out_shape}")
    cache.consumed = True

    grads: dict[str, np.ndarray] = {}
    for e, ctx in zip(reversed(cache.entries), reversed(cache.records)):
        kind = e.layer.kind
        if kind == "dense":
            d, dw, db = L.dense_backward(ctx, d)
            grads[e.weight_id] = dw
            grads[e.bias_id] = db
        elif kind == "conv2d":
            d, dw, db = L.conv2d_backward(ctx, d)
            grads[e.weight_id] = dw
            grads[e.bias_id] = db
        elif kind == "relu":
            d = L.relu_backward(ctx, d)
        elif kind == "maxpool2x2":
            d = L.maxpool2x2_backward(ctx, d)
        else:
            d = L.flatten_backward(ctx, d)
    # present gradients in forward parameter order
    ordered = {
        pid: grads[pid]
        for e in cache.entries
        if e.layer.has_params
        for pid in (e.weight_id, e.bias_id)
    }
    return ordered


def check_alignment(params: Mapping[str, np.ndarray], other: Mapping[str, np.ndarray], what: str):
    """Raise AlignmentError unless `other` covers ids with matching shapes."""
    for pid, arr in other.items():
        if pid not in params:
            raise AlignmentError(f"{what}: unknown parameter id {pid!r}")
        if params[pid].shape != arr.shape:
            raise AlignmentError(
                f"{what}: shape mismatch at {pid!r}: "
                f"{params[pid].shape} vs {arr.shape}"
            )
