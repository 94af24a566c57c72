"""Network graphs instrumented with pruning gates.

A :class:`GraphSpec` is a JSON document listing layers (each names its
inputs, defaulting to the previous layer) and pruning sites (each gates the
output of one or more layers).  :func:`build` validates it, splits grouped
convolutions into slice/conv/concat, infers shapes, initialises weights and
analyses channel provenance: for every tensor channel, which site (if any)
decides whether it survives.  That analysis drives both the resource
polynomial and :func:`extract`.
"""

from __future__ import annotations

import copy
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .gate import GateConfig, GateSample, gate_forward
from .rho_solver import PruningSiteState
from .tensor_core import DTYPES, Tensor, functional as F, no_tape
from .tensor_core.functional import conv_output_hw
from .tensorio import load_tensors, save_tensors

SPEC_FORMAT = "taperprune-graph/1"
LAYER_KINDS = ("conv", "dense", "relu", "maxpool", "flatten", "concat", "slice")
INPUT = "input"

# provenance codes in the site-index arrays
UNGATED = -1
UNCONSUMED = -2


class GraphSpecError(ValueError):
    """Invalid graph description or an unsupported gating configuration."""


class DisconnectedError(GraphSpecError):
    """Extraction would leave a tensor with no channels."""


@dataclass
class GraphSpec:
    input_shape: tuple[int, ...]
    layers: list[dict]
    sites: list[dict] = field(default_factory=list)
    init: dict = field(default_factory=lambda: {"seed": 0})

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSpec":
        fmt = d.get("format", SPEC_FORMAT)
        if fmt != SPEC_FORMAT:
            raise GraphSpecError(f"unsupported graph format {fmt!r}")
        try:
            return cls(
                input_shape=tuple(int(v) for v in d["input_shape"]),
                layers=[dict(layer) for layer in d["layers"]],
                sites=[dict(s) for s in d.get("sites", [])],
                init=dict(d.get("init", {"seed": 0})),
            )
        except KeyError as e:
            raise GraphSpecError(f"graph spec is missing {e.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {
            "format": SPEC_FORMAT,
            "input_shape": list(self.input_shape),
            "layers": copy.deepcopy(self.layers),
            "sites": copy.deepcopy(self.sites),
            "init": dict(self.init),
        }

    @classmethod
    def load(cls, path) -> "GraphSpec":
        spec = cls.from_dict(json.loads(Path(path).read_text()))
        weights = spec.init.get("weights")
        if weights and not Path(weights).is_absolute():
            spec.init["weights"] = str((Path(path).parent / weights).resolve())
        return spec

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class Node:
    name: str
    kind: str
    inputs: tuple[str, ...]
    attrs: dict
    shape: tuple[int, ...] = ()


@dataclass
class LayerCost:
    """One conv/dense layer: ``unit * (sum of kept inputs) * (sum of kept outputs)`` MACs."""

    name: str
    kind: str
    unit: int
    in_site: np.ndarray
    in_chan: np.ndarray
    out_site: np.ndarray
    out_chan: np.ndarray
    weights_per_pair: int = 1


@dataclass
class PrunedConfiguration:
    masks: dict[str, np.ndarray]
    weights: dict[str, np.ndarray]


# spec parsing -------------------------------------------------------------


def _normalise_layers(spec: GraphSpec) -> list[Node]:
    seen = {INPUT}
    nodes = []
    prev = INPUT
    for i, layer in enumerate(spec.layers):
        name = layer.get("name") or f"layer{i}"
        kind = layer.get("kind")
        if kind not in LAYER_KINDS:
            raise GraphSpecError(f"layer {name!r}: unknown kind {kind!r}")
        if name in seen:
            raise GraphSpecError(f"duplicate layer name {name!r}")
        seen.add(name)
        inputs = layer.get("inputs", [prev])
        if isinstance(inputs, str):
            inputs = [inputs]
        if kind != "concat" and len(inputs) != 1:
            raise GraphSpecError(f"layer {name!r}: {kind} takes exactly one input")
        attrs = {k: v for k, v in layer.items() if k not in ("name", "kind", "inputs")}
        nodes.append(Node(name, kind, tuple(inputs), attrs))
        prev = name
    names = {n.name for n in nodes} | {INPUT}
    for n in nodes:
        for src in n.inputs:
            if src not in names:
                raise GraphSpecError(f"layer {n.name!r}: unknown input {src!r}")
    return nodes


def _toposort(nodes: list[Node]) -> list[Node]:
    by_name = {n.name: n for n in nodes}
    indeg = {n.name: sum(1 for s in n.inputs if s != INPUT) for n in nodes}
    users = defaultdict(list)
    for n in nodes:
        for s in n.inputs:
            users[s].append(n.name)
    ready = [n.name for n in nodes if indeg[n.name] == 0]
    order = []
    while ready:
        name = ready.pop(0)
        order.append(by_name[name])
        for u in users[name]:
            indeg[u] -= 1
            if indeg[u] == 0:
                ready.append(u)
    if len(order) != len(nodes):
        stuck = sorted(n for n, d in indeg.items() if d > 0)
        raise GraphSpecError(f"cycle detected among layers {stuck}")
    return order


def _split_groups(nodes: list[Node], shapes: dict[str, tuple]) -> list[Node]:
    """Replace each grouped conv by per-group slice -> conv and a concat."""
    out = []
    for n in nodes:
        groups = int(n.attrs.get("groups", 1))
        if n.kind != "conv" or groups == 1:
            out.append(n)
            continue
        cin = shapes[n.inputs[0]][0]
        k = int(n.attrs["out_channels"])
        if cin % groups or k % groups:
            raise GraphSpecError(f"layer {n.name!r}: channels ({cin}, {k}) not divisible by groups={groups}")
        parts = []
        for g in range(groups):
            sl = Node(f"{n.name}/in{g}", "slice", n.inputs, {"start": g * cin // groups, "stop": (g + 1) * cin // groups})
            attrs = {k2: v for k2, v in n.attrs.items() if k2 != "groups"}
            attrs["out_channels"] = k // groups
            attrs["group_of"] = n.name
            conv = Node(f"{n.name}/g{g}", "conv", (sl.name,), attrs)
            out.extend([sl, conv])
            parts.append(conv.name)
        out.append(Node(n.name, "concat", tuple(parts), {}))
    return out


def _infer_shape(n: Node, shapes: dict[str, tuple]) -> tuple[int, ...]:
    ins = [shapes[s] for s in n.inputs]
    a = n.attrs
    if n.kind == "conv":
        c, h, w = ins[0]
        k = int(a.get("kernel", 3))
        ho, wo = conv_output_hw(h, w, k, k, int(a.get("stride", 1)), int(a.get("pad", 0)))
        if ho <= 0 or wo <= 0:
            raise GraphSpecError(f"layer {n.name!r}: empty output {ho}x{wo}")
        return (int(a["out_channels"]), ho, wo)
    if n.kind == "dense":
        if len(ins[0]) != 1:
            raise GraphSpecError(f"layer {n.name!r}: dense needs a flat input, got shape {ins[0]}")
        return (int(a["out_features"]),)
    if n.kind == "relu":
        return ins[0]
    if n.kind == "maxpool":
        c, h, w = ins[0]
        k = int(a.get("kernel", 2))
        ho, wo = conv_output_hw(h, w, k, k, int(a.get("stride", k)), 0)
        return (c, ho, wo)
    if n.kind == "flatten":
        return (int(np.prod(ins[0])),)
    if n.kind == "concat":
        rest = {s[1:] for s in ins}
        if len(rest) != 1:
            raise GraphSpecError(f"layer {n.name!r}: concat inputs disagree on spatial extents {sorted(rest)}")
        return (sum(s[0] for s in ins),) + ins[0][1:]
    if n.kind == "slice":
        start, stop = int(a["start"]), int(a["stop"])
        if not 0 <= start < stop <= ins[0][0]:
            raise GraphSpecError(f"layer {n.name!r}: slice [{start}:{stop}] outside {ins[0][0]} channels")
        return (stop - start,) + ins[0][1:]
    raise AssertionError(n.kind)


# the graph ---------------------------------------------------------------


class InstrumentedGraph:
    def __init__(self, spec: GraphSpec, dtype: str = "float64"):
        self.spec = spec
        self.dtype = DTYPES[dtype]
        if len(spec.input_shape) not in (1, 3):
            raise GraphSpecError(f"input_shape must be (C, H, W) or (F,), got {spec.input_shape}")

        nodes = _toposort(_normalise_layers(spec))
        shapes = {INPUT: tuple(spec.input_shape)}
        for n in nodes:
            shapes[n.name] = _infer_shape(n, shapes)
        nodes = _toposort(_split_groups(nodes, shapes))
        for n in nodes:
            n.shape = _infer_shape(n, shapes)
            shapes[n.name] = n.shape
        if not nodes:
            raise GraphSpecError("graph has no layers")
        self.nodes = nodes
        self.shapes = shapes
        self.output = nodes[-1].name
        consumers = defaultdict(list)
        for n in nodes:
            for s in n.inputs:
                consumers[s].append(n)
        self.consumers = consumers

        self.site_names: list[str] = []
        self.gate_at: dict[str, str] = {}
        self.site_points: dict[str, list[str]] = {}
        for s in spec.sites:
            name = s.get("name")
            at = s.get("at")
            if not name or not at:
                raise GraphSpecError(f"site declaration needs 'name' and 'at': {s}")
            if name in self.site_points:
                raise GraphSpecError(f"duplicate site name {name!r}")
            points = [at] if isinstance(at, str) else list(at)
            for p in points:
                if p == INPUT:
                    raise GraphSpecError(f"site {name!r}: gating the raw network input is not supported")
                if p not in shapes:
                    raise GraphSpecError(f"site {name!r}: no layer named {p!r}")
                if p in self.gate_at:
                    raise GraphSpecError(f"layer {p!r} is gated by both {self.gate_at[p]!r} and {name!r}")
                if p == self.output:
                    raise GraphSpecError(f"site {name!r}: the network output cannot be gated")
                self.gate_at[p] = name
            counts = {shapes[p][0] for p in points}
            if len(counts) != 1:
                raise GraphSpecError(f"site {name!r}: shared points disagree on channel count {sorted(counts)}")
            self.site_names.append(name)
            self.site_points[name] = points
        self.site_channels = {s: shapes[self.site_points[s][0]][0] for s in self.site_names}
        self.sites: dict[str, PruningSiteState] = {}
        self.reset_sites()

        self.params: dict[str, Tensor] = {}
        self._init_params(spec.init)
        self._analyse_provenance()

    # parameters ----------------------------------------------------------

    def _param_shapes(self):
        for n in self.nodes:
            if n.kind == "conv":
                k = int(n.attrs.get("kernel", 3))
                yield n, (n.shape[0], self.shapes[n.inputs[0]][0], k, k)
            elif n.kind == "dense":
                yield n, (n.shape[0], self.shapes[n.inputs[0]][0])

    def _init_params(self, init: dict) -> None:
        seed = int(init.get("seed", 0))
        for i, (n, wshape) in enumerate(self._param_shapes()):
            fan_in = int(np.prod(wshape[1:]))
            gen = rngmod.generator(seed, rngmod.INIT, i)
            w = gen.standard_normal(wshape) * np.sqrt(2.0 / fan_in)
            self.params[f"{n.name}.weight"] = Tensor(w.astype(self.dtype), requires_grad=True, name=f"{n.name}.weight")
            self.params[f"{n.name}.bias"] = Tensor(np.zeros(wshape[0], self.dtype), requires_grad=True, name=f"{n.name}.bias")
        if init.get("weights"):
            tensors, _ = load_tensors(init["weights"])
            self.load_weights(tensors)

    def load_weights(self, tensors: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            if name not in tensors:
                raise GraphSpecError(f"weight file lacks tensor {name!r}")
            arr = np.asarray(tensors[name])
            if arr.shape != t.shape:
                raise GraphSpecError(f"weight {name!r}: expected shape {t.shape}, file has {arr.shape}")
            t.data = arr.astype(self.dtype)

    def weight_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def save_weights(self, path) -> None:
        save_tensors(path, self.weight_arrays(), {"graph": self.spec.to_dict()})

    def reset_sites(self, rho_max: float = 12.0) -> None:
        self.sites = {s: PruningSiteState.fresh(s, self.site_channels[s], rho_max) for s in self.site_names}

    # execution -----------------------------------------------------------

    def forward(
        self,
        x,
        mode: str = "eval",
        *,
        iteration: int = 0,
        seed: int = 0,
        gate_cfg: GateConfig | None = None,
        masks: dict[str, np.ndarray] | None = None,
    ):
        """Run the network.

        ``mode`` is ``"train"`` (stochastic gates), ``"eval"`` (keep channels
        with ``rho > 0``), ``"mask"`` (explicit ``masks``) or ``"off"`` (gates
        bypassed, i.e. the uninstrumented network).  Returns the output
        tensor and the gate samples keyed by gated layer name.
        """
        if mode not in ("train", "eval", "mask", "off"):
            raise ValueError(f"unknown mode {mode!r}")
        gate_cfg = gate_cfg or GateConfig()
        xt = x if isinstance(x, Tensor) else Tensor.wrap(np.asarray(x, dtype=self.dtype))
        if xt.shape[1:] != tuple(self.spec.input_shape):
            raise GraphSpecError(f"input batch has shape {xt.shape[1:]}, graph expects {tuple(self.spec.input_shape)}")
        values = {INPUT: xt}
        samples: dict[str, GateSample] = {}
        for n in self.nodes:
            args = [values[s] for s in n.inputs]
            out = self._apply(n, args)
            site = self.gate_at.get(n.name)
            if site is not None and mode != "off":
                if mode == "train":
                    point = self.site_points[site].index(n.name)
                    gen = rngmod.generator(seed, rngmod.GATE, iteration, self.site_names.index(site), point)
                    out, samples[n.name] = gate_forward(out, self.sites[site].rho, gate_cfg, gen)
                else:
                    keep = self.sites[site].keep if mode == "eval" else np.asarray(masks[site], dtype=bool)
                    h = np.broadcast_to(keep.astype(self.dtype), (out.shape[0], keep.shape[0]))
                    out = F.channel_scale(out, h)
            values[n.name] = out
        return values[self.output], samples

    def _apply(self, n: Node, args: list[Tensor]) -> Tensor:
        a = n.attrs
        if n.kind == "conv":
            return F.conv2d(
                args[0], self.params[f"{n.name}.weight"], self.params[f"{n.name}.bias"],
                stride=int(a.get("stride", 1)), pad=int(a.get("pad", 0)),
            )
        if n.kind == "dense":
            return F.dense(args[0], self.params[f"{n.name}.weight"], self.params[f"{n.name}.bias"])
        if n.kind == "relu":
            return F.relu(args[0])
        if n.kind == "maxpool":
            k = int(a.get("kernel", 2))
            return F.maxpool2d(args[0], k, int(a.get("stride", k)))
        if n.kind == "flatten":
            return F.flatten(args[0])
        if n.kind == "concat":
            return F.concat_channels(args)
        if n.kind == "slice":
            return F.slice_channels(args[0], int(a["start"]), int(a["stop"]))
        raise AssertionError(n.kind)

    def site_L0p(self, samples: dict[str, GateSample]) -> dict[str, np.ndarray]:
        """``-sum_n dL0/dx`` per channel, summed over all points of a shared site."""
        out = {s: np.zeros(self.site_channels[s]) for s in self.site_names}
        for point, sample in samples.items():
            out[self.gate_at[point]] += sample.L0p()
        return out

    # provenance ----------------------------------------------------------

    def _analyse_provenance(self) -> None:
        site_idx = {s: i for i, s in enumerate(self.site_names)}

        def gated(site, c):
            return np.full(c, site_idx[site]), np.arange(c)

        # upstream: which site last gated each channel (consumer-visible tensors)
        in_pre, in_post = {}, {}
        c0 = self.shapes[INPUT][0]
        in_post[INPUT] = (np.full(c0, UNGATED), np.zeros(c0, int))
        for n in self.nodes:
            c = n.shape[0]
            if n.kind in ("conv", "dense"):
                prov = (np.full(c, UNGATED), np.zeros(c, int))
            elif n.kind in ("relu", "maxpool"):
                prov = in_post[n.inputs[0]]
            elif n.kind == "flatten":
                src = in_post[n.inputs[0]]
                rep = int(np.prod(self.shapes[n.inputs[0]][1:]))
                prov = (np.repeat(src[0], rep), np.repeat(src[1], rep))
            elif n.kind == "concat":
                parts = [in_post[s] for s in n.inputs]
                prov = (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
            else:
                src = in_post[n.inputs[0]]
                sl = slice(int(n.attrs["start"]), int(n.attrs["stop"]))
                prov = (src[0][sl], src[1][sl])
            in_pre[n.name] = prov
            site = self.gate_at.get(n.name)
            if site is not None:
                if np.any(prov[0] >= 0):
                    other = self.site_names[int(prov[0][prov[0] >= 0][0])]
                    raise GraphSpecError(f"channels of {n.name!r} are claimed by two sites: {other!r} and {site!r}")
                prov = gated(site, c)
            in_post[n.name] = prov

        # downstream: which site will gate each channel
        out_post, out_pre = {}, {}
        for name in [n.name for n in reversed(self.nodes)] + [INPUT]:
            c = self.shapes[name][0]
            acc = (np.full(c, UNCONSUMED), np.zeros(c, int))
            users = self.consumers.get(name, [])
            if not users:
                acc = (np.full(c, UNGATED), np.zeros(c, int))
            for u in users:
                contrib = self._downstream_contribution(name, u, out_pre[u.name])
                acc = _merge(acc, contrib, name, self.site_names)
            out_post[name] = acc
            site = self.gate_at.get(name)
            if site is not None:
                if np.any(acc[0] >= 0):
                    other = self.site_names[int(acc[0][acc[0] >= 0][0])]
                    raise GraphSpecError(f"channels of {name!r} are claimed by two sites: {site!r} and {other!r}")
                out_pre[name] = gated(site, c)
            else:
                out_pre[name] = acc
        if np.any(out_post[INPUT][0] >= 0):
            raise GraphSpecError("a site gates channels of the raw network input; this is not supported")

        self._in_post = in_post
        self._out_pre = out_pre
        self._out_post = out_post

    def _downstream_contribution(self, name: str, u: Node, u_out):
        c = self.shapes[name][0]
        if u.kind in ("conv", "dense"):
            return (np.full(c, UNGATED), np.zeros(c, int))
        if u.kind in ("relu", "maxpool"):
            return u_out
        if u.kind == "flatten":
            rep = int(np.prod(self.shapes[name][1:]))
            s = u_out[0].reshape(c, rep)
            ch = u_out[1].reshape(c, rep)
            if rep > 1 and np.any(s >= 0):
                raise GraphSpecError(f"a site gates the flattened output of {name!r}; gate the channels before flattening")
            return (s[:, 0].copy(), ch[:, 0].copy())
        if u.kind == "concat":
            off = 0
            acc = (np.full(c, UNCONSUMED), np.zeros(c, int))
            for s in u.inputs:
                cs = self.shapes[s][0]
                if s == name:
                    acc = _merge(acc, (u_out[0][off : off + cs], u_out[1][off : off + cs]), name, self.site_names)
                off += cs
            return acc
        start, stop = int(u.attrs["start"]), int(u.attrs["stop"])
        s = np.full(c, UNCONSUMED)
        ch = np.zeros(c, int)
        s[start:stop] = u_out[0]
        ch[start:stop] = u_out[1]
        return (s, ch)

    def layer_costs(self) -> list[LayerCost]:
        out = []
        for n in self.nodes:
            if n.kind not in ("conv", "dense"):
                continue
            src = n.inputs[0]
            if n.kind == "conv":
                k = int(n.attrs.get("kernel", 3))
                unit = k * k * n.shape[1] * n.shape[2]
                wpp = k * k
            else:
                unit = 1
                wpp = 1
            out.append(LayerCost(n.name, n.kind, unit, *self._in_post[src], *self._out_pre[n.name], weights_per_pair=wpp))
        return out

    def keep_vector(self, name: str, masks: dict[str, np.ndarray]) -> np.ndarray:
        """Channels of the consumer-visible output of ``name`` that survive ``masks``."""
        keep = np.ones(self.shapes[name][0], dtype=bool)
        for s, ch in (self._in_post[name], self._out_post[name]):
            for i, site in enumerate(self.site_names):
                sel = s == i
                keep[sel] &= np.asarray(masks[site], dtype=bool)[ch[sel]]
        return keep

    def eval_masks(self) -> dict[str, np.ndarray]:
        return {s: st.keep.copy() for s, st in self.sites.items()}


def _merge(a, b, name, site_names):
    sa, ca = a
    sb, cb = b
    s = sa.copy()
    c = ca.copy()
    take = sa == UNCONSUMED
    s[take] = sb[take]
    c[take] = cb[take]
    both = (sa != UNCONSUMED) & (sb != UNCONSUMED)
    clash = both & ((sa != sb) | ((sa >= 0) & (ca != cb)))
    if np.any(clash):
        i = int(np.flatnonzero(clash)[0])
        label = lambda v: "ungated consumers" if v == UNGATED else f"site {site_names[v]!r}"  # noqa: E731
        raise GraphSpecError(
            f"channel {i} of {name!r} is claimed by {label(sa[i])} and {label(sb[i])}"
        )
    return s, c


def build(spec: GraphSpec | dict, dtype: str = "float64") -> InstrumentedGraph:
    if isinstance(spec, dict):
        spec = GraphSpec.from_dict(spec)
    return InstrumentedGraph(spec, dtype)


def forward_train(graph: InstrumentedGraph, x, y, iteration: int, *, seed: int = 0, gate_cfg: GateConfig | None = None):
    """Stochastic-gate forward pass; returns the loss tensor and gate samples."""
    logits, samples = graph.forward(x, "train", iteration=iteration, seed=seed, gate_cfg=gate_cfg)
    return F.softmax_cross_entropy(logits, y), samples


def forward_eval(graph: InstrumentedGraph, x, batch_size: int = 512) -> np.ndarray:
    """Deterministic inference: channels with ``rho > 0`` kept, the rest zeroed."""
    outs = []
    with no_tape():
        for i in range(0, len(x), batch_size):
            outs.append(graph.forward(x[i : i + batch_size], "eval")[0].data)
    return np.concatenate(outs, axis=0)


# extraction --------------------------------------------------------------


def extract(graph: InstrumentedGraph, masks: dict[str, np.ndarray] | None = None):
    """Slice weights down to the kept channels.

    Returns the :class:`PrunedConfiguration` and a gate-free
    :class:`GraphSpec` whose ``init.weights`` is left empty; pair it with
    ``configuration.weights``.
    """
    masks = graph.eval_masks() if masks is None else {k: np.asarray(v, dtype=bool) for k, v in masks.items()}
    keep = {INPUT: np.ones(graph.shapes[INPUT][0], dtype=bool)}
    for n in graph.nodes:
        keep[n.name] = graph.keep_vector(n.name, masks)
        if not keep[n.name].any():
            site = graph.gate_at.get(n.name) or "downstream sites"
            raise DisconnectedError(f"extraction keeps no channels of {n.name!r} ({site}); the network would be disconnected")

    layers, weights = [], {}
    for n in graph.nodes:
        layer = {"name": n.name, "kind": n.kind, "inputs": list(n.inputs)}
        attrs = {k: v for k, v in n.attrs.items() if k != "group_of"}
        if n.kind in ("conv", "dense"):
            kin = keep[n.inputs[0]]
            kout = keep[n.name]
            w = graph.params[f"{n.name}.weight"].data
            weights[f"{n.name}.weight"] = np.ascontiguousarray(w[kout][:, kin])
            weights[f"{n.name}.bias"] = graph.params[f"{n.name}.bias"].data[kout].copy()
            attrs["out_channels" if n.kind == "conv" else "out_features"] = int(kout.sum())
        elif n.kind == "slice":
            kin = keep[n.inputs[0]]
            start, stop = int(attrs["start"]), int(attrs["stop"])
            attrs["start"] = int(kin[:start].sum())
            attrs["stop"] = attrs["start"] + int(kin[start:stop].sum())
        layer.update(attrs)
        layers.append(layer)

    dense = GraphSpec(tuple(graph.spec.input_shape), layers, sites=[], init={"seed": 0})
    return PrunedConfiguration(masks={k: v.copy() for k, v in masks.items()}, weights=weights), dense


def build_extracted(config: PrunedConfiguration, dense_spec: GraphSpec, dtype: str = "float64") -> InstrumentedGraph:
    g = InstrumentedGraph(dense_spec, dtype)
    g.load_weights(config.weights)
    return g


def count_macs(graph: InstrumentedGraph) -> int:
    """Naive multiply count of the graph with every channel present."""
    total = 0
    for n in graph.nodes:
        if n.kind == "conv":
            k = int(n.attrs.get("kernel", 3))
            cin = graph.shapes[n.inputs[0]][0]
            total += n.shape[0] * cin * k * k * n.shape[1] * n.shape[2]
        elif n.kind == "dense":
            total += n.shape[0] * graph.shapes[n.inputs[0]][0]
    return total


def count_weights(graph: InstrumentedGraph) -> int:
    """Number of conv/dense weights (biases excluded)."""
    return sum(int(np.prod(t.shape)) for k, t in graph.params.items() if k.endswith(".weight"))
