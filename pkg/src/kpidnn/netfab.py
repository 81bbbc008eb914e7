"""Explicit feedforward networks that compute the classical KPI features.

Every network is a stack of :class:`Layer` objects, each an affine map
followed by a pointwise activation (identity, ReLU or sigmoid, chosen per
unit). Nothing is trained: the weights are written down directly.

Building blocks::

    abs(x)    = relu(x) + relu(-x)
    max(x, y) = (x + y + |x - y|) / 2
    min(x, y) = (x + y - |x - y|) / 2
    f_a(x)    = sigmoid(-2e4 * relu(a - x) + 10)    ~ 1{x >= a}
    g_a(x)    = sigmoid(-2e4 * relu(x - a) + 10)    ~ 1{x <  a}

``f_a`` is within ``sigmoid(-10) < 4.6e-5`` of the indicator once
``|x - a| >= 1e-3``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import features as fo
from .exceptions import DimensionMismatch, LengthError, ParseError, UnsupportedFeature
from .features import FeatureKind as K
from .features import FeatureSpec, FeatureProfile
from .textformat import LineReader, read_layer, write_layer

INDICATOR_SLOPE = 2e4
INDICATOR_OFFSET = 10.0
TRANSITION_BAND = 1e-3
EXACT_RTOL = 1e-9
INDICATOR_ATOL = 1e-3


class Activation(str, Enum):
    IDENTITY = "identity"
    RELU = "relu"
    SIGMOID = "sigmoid"


_CODES = {Activation.IDENTITY: 0, Activation.RELU: 1, Activation.SIGMOID: 2}
_NAMES = {v: k for k, v in _CODES.items()}


@dataclass(frozen=True, eq=False)
class Layer:
    """``activation(weight @ x + bias)``; ``weight`` is stored sparse (CSR)."""

    weight: sp.csr_matrix
    bias: np.ndarray
    activation: object = Activation.IDENTITY

    def __post_init__(self):
        weight = sp.csr_matrix(self.weight, dtype=float)
        bias = np.asarray(self.bias, dtype=float).ravel()
        if bias.size != weight.shape[0]:
            raise DimensionMismatch(f"bias has {bias.size} entries for {weight.shape[0]} units")
        if not (np.all(np.isfinite(weight.data)) and np.all(np.isfinite(bias))):
            raise ValueError("layer parameters must be finite")
        if isinstance(self.activation, (str, Activation)):
            codes = np.full(weight.shape[0], _CODES[Activation(self.activation)], dtype=np.int8)
        else:
            codes = np.array([_CODES[Activation(a)] if not isinstance(a, (int, np.integer)) else a
                              for a in self.activation], dtype=np.int8)
            if codes.size != weight.shape[0]:
                raise DimensionMismatch("one activation per unit is required")
        bias.flags.writeable = False
        codes.flags.writeable = False
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "activation", codes)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def activation_names(self):
        """A single name when all units share it, else a per-unit list."""
        unique = np.unique(self.activation)
        if unique.size == 1:
            return _NAMES[int(unique[0])].value
        return [_NAMES[int(c)].value for c in self.activation]

    def apply(self, X: np.ndarray) -> np.ndarray:
        Z = (self.weight @ X.T).T + self.bias
        relu = self.activation == 1
        sig = self.activation == 2
        if relu.any():
            Z[:, relu] = np.maximum(Z[:, relu], 0.0)
        if sig.any():
            Z[:, sig] = expit(Z[:, sig])
        return Z


def identity_layer(dim: int) -> Layer:
    return Layer(sp.identity(dim, format="csr"), np.zeros(dim))


@dataclass(frozen=True, eq=False)
class CompGraph:
    layers: tuple
    input_dim: int
    output_names: tuple = ()

    def __post_init__(self):
        layers = tuple(self.layers)
        dim = int(self.input_dim)
        if dim < 1:
            raise DimensionMismatch("input_dim must be positive")
        for i, layer in enumerate(layers):
            if layer.in_dim != dim:
                raise DimensionMismatch(
                    f"layer {i} expects {layer.in_dim} inputs but receives {dim}"
                )
            dim = layer.out_dim
        names = tuple(self.output_names) or tuple(f"y{i}" for i in range(dim))
        if len(names) != dim:
            raise DimensionMismatch(f"{len(names)} output names for {dim} outputs")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "output_names", names)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim if self.layers else self.input_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def __call__(self, x):
        return eval_graph(self, x)


def eval_graph(graph: CompGraph, x) -> np.ndarray:
    """Forward pass. ``x`` is one input vector or a batch of row vectors."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != graph.input_dim:
        raise DimensionMismatch(f"graph takes {graph.input_dim} inputs, got {X.shape[1]}")
    out = X.copy()
    for layer in graph.layers:
        out = layer.apply(out)
    return out[0] if single else out


# ---------------------------------------------------------------- primitives

def _rows(entries, shape) -> sp.csr_matrix:
    """Sparse matrix from ``(row, col, value)`` triples."""
    if not entries:
        return sp.csr_matrix(shape)
    r, c, v = zip(*entries)
    return sp.csr_matrix((v, (r, c)), shape=shape)


def build_primitive(kind: str, n: int = 2) -> CompGraph:
    """Networks for add, sub, abs, max2, min2 and average_n (over ``n`` inputs)."""
    if kind == "add":
        return CompGraph((Layer([[1.0, 1.0]], [0.0]),), 2, ("add",))
    if kind == "sub":
        return CompGraph((Layer([[1.0, -1.0]], [0.0]),), 2, ("sub",))
    if kind == "abs":
        return CompGraph(
            (Layer([[1.0], [-1.0]], [0.0, 0.0], Activation.RELU), Layer([[1.0, 1.0]], [0.0])),
            1, ("abs",),
        )
    if kind in ("max2", "min2"):
        sign = 1.0 if kind == "max2" else -1.0
        hidden = Layer(
            [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0]], [0.0, 0.0, 0.0],
            [Activation.IDENTITY, Activation.RELU, Activation.RELU],
        )
        return CompGraph((hidden, Layer([[0.5, 0.5 * sign, 0.5 * sign]], [0.0])), 2, (kind,))
    if kind == "average_n":
        if n < 1:
            raise LengthError("average needs at least one input")
        return CompGraph((Layer(np.full((1, n), 1.0 / n), [0.0]),), n, ("average",))
    raise UnsupportedFeature(f"unknown primitive {kind!r}")


def _linear(coeffs, bias: float = 0.0) -> list[Layer]:
    return [Layer(np.atleast_2d(coeffs), [bias])]


def _fold_extreme(n: int, sign: float) -> list[Layer]:
    """max (sign=+1) or min (sign=-1) as ``op(x1, op(x2, ... op(x_{n-1}, x_n)))``.

    Stage ``s`` combines ``x_c`` (``c = n-1-s``, 0-based) with the running
    result ``m``. Its hidden units are: identity carries of ``x_0..x_{c-1}``,
    ``x_c + m`` (identity), ``relu(x_c - m)`` and ``relu(m - x_c)``. The next
    layer's affine map reads ``m' = (x_c + m)/2 + sign*(relu(.) + relu(.))/2``.
    """
    if n == 1:
        return [identity_layer(1)]
    layers = []
    # m as a linear functional of the previous layer's outputs
    m_coeffs = {n - 1: 1.0}
    prev_dim = n
    for c in range(n - 2, -1, -1):
        width = c + 3
        entries = [(i, i, 1.0) for i in range(c)]
        for col, w in m_coeffs.items():
            entries += [(c, col, w), (c + 1, col, -w), (c + 2, col, w)]
        entries += [(c, c, 1.0), (c + 1, c, 1.0), (c + 2, c, -1.0)]
        acts = [Activation.IDENTITY] * (c + 1) + [Activation.RELU] * 2
        layers.append(Layer(_rows(entries, (width, prev_dim)), np.zeros(width), acts))
        m_coeffs = {c: 0.5, c + 1: 0.5 * sign, c + 2: 0.5 * sign}
        prev_dim = width
    out = [(0, col, w) for col, w in m_coeffs.items()]
    layers.append(Layer(_rows(out, (1, prev_dim)), [0.0]))
    return layers


def _indicator(n: int, row_entries, bias: float, at_least: bool) -> list[Layer]:
    """``f_a`` (at_least) or ``g_a`` applied to a linear functional of the input."""
    sign = -1.0 if at_least else 1.0
    hidden = Layer(_rows([(0, c, sign * w) for c, w in row_entries], (1, n)), [sign * bias],
                   Activation.RELU)
    squash = Layer([[-INDICATOR_SLOPE]], [INDICATOR_OFFSET], Activation.SIGMOID)
    return [hidden, squash]


def _count(n: int, above: bool) -> list[Layer]:
    centre = np.eye(n) - np.full((n, n), 1.0 / n)
    sign = -1.0 if above else 1.0
    return [
        Layer(centre, np.zeros(n)),
        Layer(sign * sp.identity(n), np.zeros(n), Activation.RELU),
        Layer(-INDICATOR_SLOPE * sp.identity(n), np.full(n, INDICATOR_OFFSET), Activation.SIGMOID),
        # each indicator saturates at sigmoid(10), not 1; rescale so n terms do not add up n errors
        Layer(np.full((1, n), 1.0 / expit(INDICATOR_OFFSET)), [0.0]),
    ]


def _feature_layers(spec: FeatureSpec, n: int) -> list[Layer]:
    kind = spec.kind
    e = np.zeros(n)
    last = n - 1
    if kind == K.SIMPLE_THRESHOLD_GE:
        return _indicator(n, [(last, 1.0)], -spec.threshold, at_least=True)
    if kind == K.SIMPLE_THRESHOLD_LT:
        return _indicator(n, [(last, 1.0)], -spec.threshold, at_least=False)
    if kind == K.MAX:
        return _fold_extreme(n, 1.0)
    if kind == K.MIN:
        return _fold_extreme(n, -1.0)
    if kind == K.AVERAGE:
        return build_primitive("average_n", n).layers
    if kind == K.INTEGRATION:
        return _linear(np.ones(n))
    if kind == K.DIFFERENCE:
        entries = [(i, i, -1.0) for i in range(n - 1)] + [(i, i + 1, 1.0) for i in range(n - 1)]
        return [Layer(_rows(entries, (n - 1, n)), np.zeros(n - 1))]
    if kind == K.ABS_SUM_CHANGES:
        entries = []
        for i in range(n - 1):
            entries += [(2 * i, i + 1, 1.0), (2 * i, i, -1.0),
                        (2 * i + 1, i + 1, -1.0), (2 * i + 1, i, 1.0)]
        hidden = Layer(_rows(entries, (2 * (n - 1), n)), np.zeros(2 * (n - 1)), Activation.RELU)
        return [hidden, Layer(np.ones((1, 2 * (n - 1))), [0.0])]
    if kind == K.MEAN_CHANGE:
        e[0] -= 1.0 / n
        e[last] += 1.0 / n
        return _linear(e)
    if kind == K.MEAN_SECOND_DERIVATIVE_CENTRAL:
        for i in range(n - 2):
            e[i] += 1.0
            e[i + 1] -= 2.0
            e[i + 2] += 1.0
        return _linear(e / (2.0 * n))
    if kind == K.COUNT_ABOVE_MEAN:
        return _count(n, above=True)
    if kind == K.COUNT_BELOW_MEAN:
        return _count(n, above=False)
    if kind == K.HISTORICAL_CHANGE:
        return [Layer(_rows([(0, last, 1.0), (0, last - spec.horizon, -1.0)], (1, n)), [0.0])]
    if kind == K.SMA_FIT:
        e[n - spec.window:] = 1.0 / spec.window
        e[last] -= 1.0
        return _linear(e)
    if kind == K.WMA_FIT:
        e[n - spec.window:] = fo.wma_weights(spec.window)
        e[last] -= 1.0
        return _linear(e)
    if kind == K.EWMA_FIT:
        e = fo.ewma_weights(n, spec.alpha)
        e[last] -= 1.0
        return _linear(e)
    raise UnsupportedFeature(f"no network construction for {kind!r}")


def build_feature(spec: FeatureSpec, n: int) -> CompGraph:
    if not isinstance(spec, FeatureSpec):
        raise UnsupportedFeature(f"expected a FeatureSpec, got {spec!r}")
    if n < spec.min_length:
        raise LengthError(f"{spec.name} needs n >= {spec.min_length}, got {n}")
    return CompGraph(tuple(_feature_layers(spec, n)), n, tuple(spec.output_names(n)))


def pad(graph: CompGraph, depth: int) -> CompGraph:
    """Append identity layers until ``graph`` has ``depth`` layers."""
    extra = depth - graph.depth
    if extra < 0:
        raise ValueError("cannot pad to a smaller depth")
    layers = graph.layers + tuple(identity_layer(graph.output_dim) for _ in range(extra))
    return CompGraph(layers, graph.input_dim, graph.output_names)


def combine(graphs: Sequence[CompGraph]) -> CompGraph:
    """Run several graphs side by side on a shared input as one layered network."""
    if not graphs:
        raise ValueError("nothing to combine")
    n = graphs[0].input_dim
    if any(g.input_dim != n for g in graphs):
        raise DimensionMismatch("combined graphs must share the input dimension")
    depth = max(max(g.depth for g in graphs), 1)
    graphs = [pad(g, depth) for g in graphs]
    layers = []
    for level in range(depth):
        parts = [g.layers[level] for g in graphs]
        if level == 0:
            weight = sp.vstack([p.weight for p in parts], format="csr")
        else:
            weight = sp.block_diag([p.weight for p in parts], format="csr")
        bias = np.concatenate([p.bias for p in parts])
        acts = np.concatenate([p.activation for p in parts])
        layers.append(Layer(weight, bias, acts))
    names = tuple(name for g in graphs for name in g.output_names)
    return CompGraph(tuple(layers), n, names)


def build_feature_network(profile, n: int) -> CompGraph:
    """One network whose outputs are every feature of ``profile``.

    ``profile`` is a :class:`~kpidnn.features.FeatureProfile` (parameterizations
    that do not fit in ``n`` points are dropped) or an explicit list of specs.
    Output order matches :func:`kpidnn.features.compute_all`.
    """
    specs = profile.specs(n) if isinstance(profile, FeatureProfile) else list(profile)
    return combine([build_feature(s, n) for s in specs])


# ---------------------------------------------------------------- verification

@dataclass
class FeatureCheck:
    name: str
    kind: str
    tolerance: float
    max_abs_error: float = 0.0
    max_rel_error: float = 0.0
    checked: int = 0
    excluded: int = 0

    @property
    def indicator(self) -> bool:
        return K(self.kind) in fo.INDICATOR_KINDS

    @property
    def passed(self) -> bool:
        err = self.max_abs_error if self.indicator else self.max_rel_error
        return self.checked > 0 and err <= self.tolerance


@dataclass
class VerificationReport:
    n: int
    trials: int
    seed: int
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def render(self) -> str:
        lines = [f"n={self.n} trials={self.trials} seed={self.seed} "
                 f"{'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(
                f"  {c.name:<38} {'PASS' if c.passed else 'FAIL'}  abs={c.max_abs_error:.3g} "
                f"rel={c.max_rel_error:.3g} tol={c.tolerance:g} checked={c.checked} "
                f"excluded={c.excluded}"
            )
        return "\n".join(lines)


def edge_vectors(n: int) -> np.ndarray:
    """Constant and monotone inputs that random sampling rarely produces."""
    ramp = np.linspace(-10.0, 10.0, n)
    return np.stack([np.zeros(n), np.full(n, 3.25), ramp, ramp[::-1]])


def _excluded(spec: FeatureSpec, x: np.ndarray) -> bool:
    if spec.kind in fo.THRESHOLD_KINDS:
        return abs(x[-1] - spec.threshold) < TRANSITION_BAND
    if spec.kind in fo.COUNT_KINDS:
        return bool(np.min(np.abs(x - np.mean(x))) < TRANSITION_BAND)
    return False


def verify(graph: CompGraph, specs, trials: int = 1000, rng_seed: int = 0) -> VerificationReport:
    """Compare ``graph`` with the direct feature computations on random inputs.

    Inputs are ``trials`` vectors uniform in [-10, 10] plus :func:`edge_vectors`.
    Exact features pass at relative error <= 1e-9 (relative to
    ``max(|expected|, 1)``); indicator-based features pass at absolute error
    <= 1e-3, skipping inputs within 1e-3 of their decision threshold.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if isinstance(specs, FeatureSpec):
        specs = [specs]
    elif isinstance(specs, FeatureProfile):
        specs = specs.specs(graph.input_dim)
    n = graph.input_dim
    width = sum(len(spec.output_names(n)) for spec in specs)
    if width != graph.output_dim:
        raise DimensionMismatch(f"specs describe {width} outputs, graph has {graph.output_dim}")
    rng = np.random.default_rng(rng_seed)
    X = np.vstack([rng.uniform(-10.0, 10.0, size=(trials, n)), edge_vectors(n)])
    got = eval_graph(graph, X)

    report = VerificationReport(n=n, trials=trials, seed=rng_seed)
    col = 0
    for spec in specs:
        width = len(spec.output_names(n))
        indicator = spec.kind in fo.INDICATOR_KINDS
        check = FeatureCheck(spec.name, spec.kind.value,
                             INDICATOR_ATOL if indicator else EXACT_RTOL)
        for row, x in enumerate(X):
            if _excluded(spec, x):
                check.excluded += 1
                continue
            expected = np.atleast_1d(fo.compute(spec, x))
            diff = np.abs(got[row, col:col + width] - expected)
            check.max_abs_error = max(check.max_abs_error, float(diff.max()))
            rel = diff / np.maximum(np.abs(expected), 1.0)
            check.max_rel_error = max(check.max_rel_error, float(rel.max()))
            check.checked += 1
        report.checks.append(check)
        col += width
    return report


# ---------------------------------------------------------------- text format

GRAPH_MAGIC = "kpidnn-graph 1"


def dump_graph(graph: CompGraph, fh) -> None:
    fh.write(GRAPH_MAGIC + "\n")
    fh.write(f"input_dim {graph.input_dim}\n")
    fh.write(f"outputs {len(graph.output_names)}\n")
    for name in graph.output_names:
        fh.write(name + "\n")
    fh.write(f"layers {graph.depth}\n")
    for layer in graph.layers:
        write_layer(fh, layer.weight, layer.bias, layer.activation_names)
    fh.write("end\n")


def load_graph(fh) -> CompGraph:
    reader = LineReader(fh)
    if reader.next() != GRAPH_MAGIC:
        raise ParseError("not a kpidnn graph file", reader.lineno)
    input_dim = int(reader.expect("input_dim")[0])
    names = tuple(reader.next() for _ in range(int(reader.expect("outputs")[0])))
    depth = int(reader.expect("layers")[0])
    layers = []
    for _ in range(depth):
        weight, bias, activation = read_layer(reader)
        layers.append(Layer(weight, bias, activation))
    reader.expect("end")
    return CompGraph(tuple(layers), input_dim, names)
