"""Per-component field networks and the five-network mixed solution.

Each field (u_x, u_y, sigma_xx, sigma_yy, sigma_xy) gets its own scalar MLP
with tanh hidden layers and a linear output.  Shear symmetry is structural:
there is a single sigma_xy network.  Parameters live in one flat vector per
network (all weight matrices layer by layer, then all bias vectors), which
keeps checkpointing, optimizers and gradient bookkeeping trivial.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine
from .autodiff import NodeRef, ScalarGraph

__all__ = [
    "NetworkShape",
    "FieldNetwork",
    "MixedSolution",
    "initialize",
    "evaluate_fields",
    "FIELD_NAMES",
]

FIELD_NAMES = ("u_x", "u_y", "sigma_xx", "sigma_yy", "sigma_xy")


@dataclass(frozen=True)
class NetworkShape:
    """Architecture of one scalar field network: 2 -> width^hidden_layers -> 1."""

    hidden_layers: int = 4
    width: int = 20

    def __post_init__(self):
        if self.hidden_layers < 1 or self.width < 1:
            raise ValueError("hidden_layers and width must be >= 1")

    @property
    def layer_dims(self) -> list[int]:
        return engine.layer_dims(self.hidden_layers, self.width)

    @property
    def n_parameters(self) -> int:
        d = self.layer_dims
        return sum(d[i] * d[i + 1] + d[i + 1] for i in range(len(d) - 1))


@dataclass
class FieldNetwork:
    """One scalar MLP with a flat parameter vector."""

    shape: NetworkShape
    parameters: np.ndarray

    def __post_init__(self):
        self.parameters = np.asarray(self.parameters, dtype=float)
        if self.parameters.shape != (self.shape.n_parameters,):
            raise ValueError(
                f"expected {self.shape.n_parameters} parameters, "
                f"got {self.parameters.shape}"
            )

    def layers(self) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Views (Ws, bs) into the flat vector; round-trips with from_layers."""
        d = self.shape.layer_dims
        Ws, bs = [], []
        off = 0
        for i in range(len(d) - 1):
            k = d[i] * d[i + 1]
            Ws.append(self.parameters[off:off + k].reshape(d[i], d[i + 1]))
            off += k
        for i in range(len(d) - 1):
            bs.append(self.parameters[off:off + d[i + 1]])
            off += d[i + 1]
        return Ws, bs

    @classmethod
    def from_layers(cls, shape: NetworkShape, Ws, bs) -> "FieldNetwork":
        flat = np.concatenate([np.asarray(W, dtype=float).ravel() for W in Ws]
                              + [np.asarray(b, dtype=float).ravel() for b in bs])
        return cls(shape, flat)

    # -- tape evaluation ---------------------------------------------------

    def lift_parameters(self, graph: ScalarGraph) -> list[NodeRef]:
        """Register every parameter as a tape leaf, in flat-vector order."""
        return [graph.lift_parameter(v) for v in self.parameters]

    def forward_refs(self, graph: ScalarGraph, param_refs: list[NodeRef],
                     x: NodeRef, y: NodeRef) -> NodeRef:
        """Record the MLP on the tape using previously lifted parameter leaves.

        The returned node's tangent channels carry (d out/dx, d out/dy)
        whenever x and y were lifted as inputs.
        """
        d = self.shape.layer_dims
        n_layers = len(d) - 1
        w_off = 0
        b_off = sum(d[i] * d[i + 1] for i in range(n_layers))
        h = [x, y]
        for l in range(n_layers):
            fan_in, fan_out = d[l], d[l + 1]
            out = []
            for j in range(fan_out):
                acc = None
                for i in range(fan_in):
                    term = graph.mul(param_refs[w_off + i * fan_out + j], h[i])
                    acc = term if acc is None else graph.add(acc, term)
                acc = graph.add(acc, param_refs[b_off + j])
                out.append(graph.tanh(acc) if l < n_layers - 1 else acc)
            w_off += fan_in * fan_out
            b_off += fan_out
            h = out
        return h[0]

    def forward(self, graph: ScalarGraph, x: NodeRef, y: NodeRef) -> NodeRef:
        """One-shot tape evaluation; lifts this network's parameters first."""
        return self.forward_refs(graph, self.lift_parameters(graph), x, y)

    # -- checkpointing -----------------------------------------------------

    def save(self, path):
        """Text checkpoint: a header line, then one C-double hex literal per line."""
        lines = [f"fieldnet-v1 hidden_layers={self.shape.hidden_layers} "
                 f"width={self.shape.width} n={self.parameters.size}"]
        lines.extend(float(v).hex() for v in self.parameters)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "FieldNetwork":
        lines = Path(path).read_text().splitlines()
        head = lines[0].split()
        if head[0] != "fieldnet-v1":
            raise ValueError(f"{path}: not a fieldnet-v1 checkpoint")
        meta = dict(kv.split("=") for kv in head[1:])
        shape = NetworkShape(int(meta["hidden_layers"]), int(meta["width"]))
        params = np.array([float.fromhex(s) for s in lines[1:] if s], dtype=float)
        if params.size != int(meta["n"]):
            raise ValueError(f"{path}: expected {meta['n']} parameters, got {params.size}")
        return cls(shape, params)


def initialize(shape: NetworkShape, seed) -> FieldNetwork:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.

    Deterministic for a fixed seed (an int or a numpy SeedSequence).
    """
    rng = np.random.default_rng(seed)
    d = shape.layer_dims
    Ws, bs = [], []
    for i in range(len(d) - 1):
        bound = np.sqrt(6.0 / (d[i] + d[i + 1]))
        Ws.append(rng.uniform(-bound, bound, size=(d[i], d[i + 1])))
        bs.append(np.zeros(d[i + 1]))
    return FieldNetwork.from_layers(shape, Ws, bs)


@dataclass
class MixedSolution:
    """The five independent field networks of one experiment (shared shape)."""

    u_x: FieldNetwork
    u_y: FieldNetwork
    sigma_xx: FieldNetwork
    sigma_yy: FieldNetwork
    sigma_xy: FieldNetwork

    def __post_init__(self):
        shapes = {net.shape for net in self.fields()}
        if len(shapes) != 1:
            raise ValueError("all five networks must share one NetworkShape")

    @classmethod
    def initialize(cls, shape: NetworkShape, seed: int) -> "MixedSolution":
        """Five independently seeded networks, reproducible from one base seed."""
        children = np.random.SeedSequence(seed).spawn(5)
        return cls(*[initialize(shape, c) for c in children])

    @property
    def shape(self) -> NetworkShape:
        return self.u_x.shape

    def fields(self) -> tuple[FieldNetwork, ...]:
        return (self.u_x, self.u_y, self.sigma_xx, self.sigma_yy, self.sigma_xy)

    def concat_parameters(self) -> np.ndarray:
        return np.concatenate([net.parameters for net in self.fields()])

    def with_parameters(self, flat: np.ndarray) -> "MixedSolution":
        per = self.shape.n_parameters
        flat = np.asarray(flat, dtype=float)
        nets = [FieldNetwork(self.shape, flat[i * per:(i + 1) * per].copy())
                for i in range(5)]
        return MixedSolution(*nets)

    def stacked(self) -> engine.StackedMLP:
        return engine.StackedMLP.from_flat(
            self.concat_parameters(), self.shape.hidden_layers, self.shape.width, 5)

    def save(self, directory):
        """Write one checkpoint file per field into a directory."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, net in zip(FIELD_NAMES, self.fields()):
            net.save(directory / f"{name}.txt")

    @classmethod
    def load(cls, directory) -> "MixedSolution":
        directory = Path(directory)
        return cls(*[FieldNetwork.load(directory / f"{name}.txt")
                     for name in FIELD_NAMES])


def evaluate_fields(sol: MixedSolution, points) -> dict:
    """Plain-value sampling of the mixed solution at an (N, 2) point array.

    Returns 'u' (N, 2), 'grad_u' (N, 2, 2) from the tangent channels, and the
    symmetric 'sigma' (N, 2, 2) assembled from the three stress networks.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    vals, grads = engine.forward_with_tangents(sol.stacked(), pts)
    u = np.stack([vals[engine.UX], vals[engine.UY]], axis=-1)
    grad_u = np.empty((pts.shape[0], 2, 2))
    grad_u[:, 0, 0] = grads[engine.UX, 0]
    grad_u[:, 0, 1] = grads[engine.UX, 1]
    grad_u[:, 1, 0] = grads[engine.UY, 0]
    grad_u[:, 1, 1] = grads[engine.UY, 1]
    sigma = np.empty((pts.shape[0], 2, 2))
    sigma[:, 0, 0] = vals[engine.SXX]
    sigma[:, 1, 1] = vals[engine.SYY]
    sigma[:, 0, 1] = vals[engine.SXY]
    sigma[:, 1, 0] = vals[engine.SXY]
    return {"u": u, "grad_u": grad_u, "sigma": sigma}
