"""Resource polynomial over retained-channel fractions.

Each conv/dense layer costs ``unit * (kept inputs) * (kept outputs)``.  With
channels kept independently with probability ``p``, the expected kept count
on either side is linear in the fractions ``w`` of the gated channel
segments feeding it, so the total is a polynomial

    F(w) = sum_ab F_ab w_a w_b + sum_a G_a w_a + const

whose variables are contiguous channel segments of sites.  Ordinary layers
see whole sites, so the variables are simply the per-site fractions ``w_l``;
split grouped convolutions see half-site segments.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .graph import InstrumentedGraph, LayerCost


class Segment(NamedTuple):
    site: str
    start: int
    stop: int

    @property
    def n(self) -> int:
        return self.stop - self.start


@dataclass
class LayerTerms:
    name: str
    kind: str
    constant: float
    linear: dict[int, float]
    quadratic: dict[tuple[int, int], float]


@dataclass
class ResourcePolynomial:
    segments: list[Segment]
    quadratic: dict[tuple[int, int], float]
    linear: dict[int, float]
    constant: float
    site_channels: dict[str, int]
    layers: list[LayerTerms] = field(default_factory=list)
    unit: str = "MAC"

    def __post_init__(self):
        self._qi = np.array([k[0] for k in self.quadratic], dtype=int)
        self._qj = np.array([k[1] for k in self.quadratic], dtype=int)
        self._qc = np.array(list(self.quadratic.values()), dtype=np.float64)
        self._li = np.array(list(self.linear), dtype=int)
        self._lc = np.array(list(self.linear.values()), dtype=np.float64)

    def coefficient_table(self) -> list[tuple[str, str, float]]:
        """``(term, variables, coefficient)`` rows, segments named ``site[start:stop]``."""
        name = lambda i: _segment_label(self.segments[i], self.site_channels)  # noqa: E731
        rows = [("const", "", self.constant)]
        rows += [("G", name(i), c) for i, c in self.linear.items()]
        rows += [("F", f"{name(i)}*{name(j)}", c) for (i, j), c in self.quadratic.items()]
        return rows

    def total(self) -> float:
        return eval_F(self, np.ones(len(self.segments)))


def _segment_label(seg: Segment, site_channels) -> str:
    if seg.start == 0 and seg.stop == site_channels[seg.site]:
        return seg.site
    return f"{seg.site}[{seg.start}:{seg.stop}]"


def _side_terms(site_idx: np.ndarray, chan: np.ndarray, site_names, site_channels):
    """Split one side of a layer into an ungated count and ``{segment: coefficient}``."""
    ungated = int(np.sum(site_idx < 0))
    terms: dict[Segment, float] = {}
    for i, site in enumerate(site_names):
        sel = site_idx == i
        if not sel.any():
            continue
        mult = np.bincount(chan[sel], minlength=site_channels[site])
        c = 0
        n = len(mult)
        while c < n:
            if mult[c] == 0:
                c += 1
                continue
            start = c
            while c < n and mult[c] == mult[start]:
                c += 1
            seg = Segment(site, start, c)
            terms[seg] = terms.get(seg, 0.0) + float(mult[start]) * seg.n
    return ungated, terms


def build_polynomial(graph: InstrumentedGraph, resource: str = "macs") -> ResourcePolynomial:
    """Collect layer costs into a polynomial.

    ``resource="macs"`` counts conv/dense multiplications; ``"weights"``
    counts conv/dense weights instead (same structure, kernel-area units).
    """
    if resource not in ("macs", "weights"):
        raise ValueError(f"unknown resource {resource!r}")
    seg_index: dict[Segment, int] = {}
    quadratic: dict[tuple[int, int], float] = defaultdict(float)
    linear: dict[int, float] = defaultdict(float)
    constant = 0.0
    layers = []

    def idx(seg):
        return seg_index.setdefault(seg, len(seg_index))

    for lc in graph.layer_costs():
        unit = lc.unit if resource == "macs" else lc.weights_per_pair
        n_in, a = _side_terms(lc.in_site, lc.in_chan, graph.site_names, graph.site_channels)
        n_out, b = _side_terms(lc.out_site, lc.out_chan, graph.site_names, graph.site_channels)
        lt = LayerTerms(lc.name, lc.kind, float(unit * n_in * n_out), {}, {})
        for seg, ca in a.items():
            lt.linear[idx(seg)] = lt.linear.get(idx(seg), 0.0) + unit * ca * n_out
        for seg, cb in b.items():
            lt.linear[idx(seg)] = lt.linear.get(idx(seg), 0.0) + unit * n_in * cb
        for sa, ca in a.items():
            for sb, cb in b.items():
                key = (idx(sa), idx(sb))
                lt.quadratic[key] = lt.quadratic.get(key, 0.0) + unit * ca * cb
        lt.linear = {k: v for k, v in lt.linear.items() if v}
        constant += lt.constant
        for k, v in lt.linear.items():
            linear[k] += v
        for k, v in lt.quadratic.items():
            quadratic[k] += v
        layers.append(lt)

    segments = [None] * len(seg_index)
    for seg, i in seg_index.items():
        segments[i] = seg
    return ResourcePolynomial(
        segments=segments,
        quadratic=dict(quadratic),
        linear={k: v for k, v in linear.items() if v},
        constant=constant,
        site_channels=dict(graph.site_channels),
        layers=layers,
        unit="MAC" if resource == "macs" else "weight",
    )


def segment_fractions(poly: ResourcePolynomial, p: dict[str, np.ndarray]) -> np.ndarray:
    """``w`` per polynomial variable: the mean retention probability over its segment."""
    return np.array([np.mean(p[s.site][s.start : s.stop]) for s in poly.segments], dtype=np.float64)


def site_fractions(sites) -> dict[str, float]:
    """``w_l = sum_c sigmoid(rho_lc) / n_l`` for each site."""
    return {name: float(np.mean(st.p)) for name, st in sites.items()}


def probabilities(sites) -> dict[str, np.ndarray]:
    return {name: st.p for name, st in sites.items()}


def eval_F(poly: ResourcePolynomial, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    total = poly.constant
    if poly._lc.size:
        total += float(np.dot(poly._lc, w[poly._li]))
    if poly._qc.size:
        total += float(np.dot(poly._qc, w[poly._qi] * w[poly._qj]))
    return total


def grad_w(poly: ResourcePolynomial, w) -> np.ndarray:
    """``dF/dw`` per polynomial variable."""
    w = np.asarray(w, dtype=np.float64)
    g = np.zeros(len(poly.segments))
    np.add.at(g, poly._li, poly._lc)
    np.add.at(g, poly._qi, poly._qc * w[poly._qj])
    np.add.at(g, poly._qj, poly._qc * w[poly._qi])
    return g


def grad_F(poly: ResourcePolynomial, p: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Per-channel ``dF/dp``: ``(1/n_seg) dF/dw_seg`` summed over segments holding the channel."""
    gw = grad_w(poly, segment_fractions(poly, p))
    out = {s: np.zeros(n) for s, n in poly.site_channels.items()}
    for seg, g in zip(poly.segments, gw):
        out[seg.site][seg.start : seg.stop] += g / seg.n
    return out


def F_of_sites(poly: ResourcePolynomial, sites) -> float:
    return eval_F(poly, segment_fractions(poly, probabilities(sites)))


def F_of_masks(poly: ResourcePolynomial, masks: dict[str, np.ndarray]) -> float:
    return eval_F(poly, segment_fractions(poly, {k: np.asarray(v, dtype=np.float64) for k, v in masks.items()}))
