"""Cooperative graph encoder with directed, per-node communication states.

Each layer first layer-normalizes node features, then lets every node pick a
communication state out of five — talk-and-listen (S), listen on incoming
edges only (L_in), listen on outgoing edges only (L_out), broadcast without
listening (B), or isolate (I) — via a Gumbel-Softmax relaxation with a
learned per-node temperature. The soft state probabilities turn into
per-edge weights for both flow directions, an environment network mixes the
weighted directional messages into new node features, and a gated global
attention readout pools the final node features into one graph vector.

Encoding a disjoint union of graphs (a :class:`GraphBatch`) is equivalent to
encoding each graph alone; all aggregation is segment-local.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .cdfg import Cdfg, encode_node_features

# Communication states, in probability-column order.
STATES = ("S", "L_in", "L_out", "B", "I")
NUM_STATES = len(STATES)

_SEL_BROADCAST = np.array([[1.0], [0.0], [0.0], [1.0], [0.0]])   # S + B
_SEL_LISTEN_IN = np.array([[1.0], [1.0], [0.0], [0.0], [0.0]])   # S + L_in
_SEL_LISTEN_OUT = np.array([[1.0], [0.0], [1.0], [0.0], [0.0]])  # S + L_out

_MEAN_EPS = 1e-9


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of graphs: node features plus flat edge/segment indices."""

    x: np.ndarray          # (n, d_node) encoded node features
    edge_src: np.ndarray   # (e,)
    edge_dst: np.ndarray   # (e,)
    node_graph: np.ndarray  # (n,) owning-graph index per node
    num_graphs: int

    @property
    def num_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edge_src.shape[0]

    @classmethod
    def from_graphs(cls, graphs: list[Cdfg], numeric_maxima=None,
                    features: list[np.ndarray] | None = None) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty graph batch")
        xs = []
        srcs, dsts, owners = [], [], []
        offset = 0
        for gi, g in enumerate(graphs):
            x = features[gi] if features is not None else \
                encode_node_features(g, numeric_maxima)
            xs.append(x)
            srcs.extend(e.src + offset for e in g.edges)
            dsts.extend(e.dst + offset for e in g.edges)
            owners.extend([gi] * g.num_nodes)
            offset += g.num_nodes
        return cls(x=np.vstack(xs),
                   edge_src=np.asarray(srcs, dtype=np.int64),
                   edge_dst=np.asarray(dsts, dtype=np.int64),
                   node_graph=np.asarray(owners, dtype=np.int64),
                   num_graphs=len(graphs))


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def _linear(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return ad.matmul(x, store[f"{name}.w"]) + store[f"{name}.b"]


def gumbel_softmax(logits: Tensor, tau: Tensor, noise: np.ndarray | None) -> Tensor:
    """Temperature-scaled softmax of (logits + noise); noise is a constant."""
    z = logits if noise is None else logits + ad.constant(noise)
    return ad.softmax(ad.div(z, tau), axis=1)


class EcognnEncoder:
    """Parameter layout and forward pass for the stacked graph encoder."""

    def __init__(self, d_in: int, hidden: int = 128, layers: int = 4,
                 tau_min: float = 0.1, temp_hidden: int = 16, prefix: str = "ecognn"):
        if layers < 1:
            raise ValueError("need at least one layer")
        if d_in < 1:
            raise ValueError("node feature dimension must be positive")
        self.d_in = d_in
        self.hidden = hidden
        self.layers = layers
        self.tau_min = tau_min
        self.temp_hidden = temp_hidden
        self.prefix = prefix

    def layer_dim(self, k: int) -> int:
        return self.d_in if k == 0 else self.hidden

    def register(self, store: ParamStore, rng: np.random.Generator) -> None:
        p = self.prefix
        for k in range(self.layers):
            d = self.layer_dim(k)
            store.add(f"{p}.l{k}.ln.scale", np.ones(d))
            store.add(f"{p}.l{k}.ln.shift", np.zeros(d))
            store.add(f"{p}.l{k}.act1.w", _glorot(rng, 3 * d, self.hidden))
            store.add(f"{p}.l{k}.act1.b", np.zeros(self.hidden))
            store.add(f"{p}.l{k}.act2.w", _glorot(rng, self.hidden, NUM_STATES))
            store.add(f"{p}.l{k}.act2.b", np.zeros(NUM_STATES))
            store.add(f"{p}.l{k}.temp1.w", _glorot(rng, d, self.temp_hidden))
            store.add(f"{p}.l{k}.temp1.b", np.zeros(self.temp_hidden))
            store.add(f"{p}.l{k}.temp2.w", _glorot(rng, self.temp_hidden, 1))
            store.add(f"{p}.l{k}.temp2.b", np.zeros(1))
            store.add(f"{p}.l{k}.env1.w", _glorot(rng, 3 * d, self.hidden))
            store.add(f"{p}.l{k}.env1.b", np.zeros(self.hidden))
            store.add(f"{p}.l{k}.env2.w", _glorot(rng, self.hidden, self.hidden))
            store.add(f"{p}.l{k}.env2.b", np.zeros(self.hidden))
        store.add(f"{p}.readout.gate.w", _glorot(rng, self.hidden, self.hidden))
        store.add(f"{p}.readout.gate.b", np.zeros(self.hidden))
        store.add(f"{p}.readout.emb.w", _glorot(rng, self.hidden, self.hidden))
        store.add(f"{p}.readout.emb.b", np.zeros(self.hidden))

    # ---- per-layer pieces -------------------------------------------------

    def pre_norm(self, store: ParamStore, h: Tensor, k: int) -> Tensor:
        p = f"{self.prefix}.l{k}.ln"
        return ad.layer_norm_core(h) * store[f"{p}.scale"] + store[f"{p}.shift"]

    def _directional_sums(self, h: Tensor, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        n = batch.num_nodes
        sum_in = ad.index_add_scatter(ad.row_gather(h, batch.edge_src), batch.edge_dst, n)
        sum_out = ad.index_add_scatter(ad.row_gather(h, batch.edge_dst), batch.edge_src, n)
        return sum_in, sum_out

    def action_logits(self, store: ParamStore, h: Tensor, batch: GraphBatch,
                      k: int) -> Tensor:
        sum_in, sum_out = self._directional_sums(h, batch)
        z = ad.concat([h, sum_in, sum_out], axis=1)
        hid = ad.relu(_linear(store, f"{self.prefix}.l{k}.act1", z))
        return _linear(store, f"{self.prefix}.l{k}.act2", hid)

    def temperatures(self, store: ParamStore, h: Tensor, k: int) -> Tensor:
        hid = ad.relu(_linear(store, f"{self.prefix}.l{k}.temp1", h))
        raw = _linear(store, f"{self.prefix}.l{k}.temp2", hid)
        return ad.softplus(raw) + ad.constant(self.tau_min)

    def sample_actions(self, store: ParamStore, h: Tensor, batch: GraphBatch, k: int,
                       rng: np.random.Generator | None, train: bool,
                       noise: np.ndarray | None = None) -> Tensor:
        """Per-node probabilities over the five states (rows sum to 1)."""
        logits = self.action_logits(store, h, batch, k)
        tau = self.temperatures(store, h, k)
        if train and noise is None:
            if rng is None:
                raise ValueError("train-mode sampling needs an rng")
            noise = rng.gumbel(size=(batch.num_nodes, NUM_STATES))
        if not train:
            noise = None
        return gumbel_softmax(logits, tau, noise)

    @staticmethod
    def derive_edge_weights(actions: Tensor, batch: GraphBatch) -> tuple[Tensor, Tensor]:
        """Per-edge weights for both flow directions.

        For an edge u->v: w_in = broadcast(u) * listen_in(v) scales the message
        delivered to v along the edge; w_out = broadcast(v) * listen_out(u)
        scales the reverse message u picks up from its outgoing neighbor.
        """
        bcast = ad.matmul(actions, ad.constant(_SEL_BROADCAST))
        lin = ad.matmul(actions, ad.constant(_SEL_LISTEN_IN))
        lout = ad.matmul(actions, ad.constant(_SEL_LISTEN_OUT))
        w_in = ad.row_gather(bcast, batch.edge_src) * ad.row_gather(lin, batch.edge_dst)
        w_out = ad.row_gather(bcast, batch.edge_dst) * ad.row_gather(lout, batch.edge_src)
        return w_in, w_out

    def env_update(self, store: ParamStore, h: Tensor, w_in: Tensor, w_out: Tensor,
                   batch: GraphBatch, k: int) -> Tensor:
        """Weighted-mean directional messages followed by the environment MLP."""
        n = batch.num_nodes
        h_src = ad.row_gather(h, batch.edge_src)
        h_dst = ad.row_gather(h, batch.edge_dst)
        m_in_num = ad.index_add_scatter(h_src * w_in, batch.edge_dst, n)
        m_in_den = ad.index_add_scatter(w_in, batch.edge_dst, n) + ad.constant(_MEAN_EPS)
        m_out_num = ad.index_add_scatter(h_dst * w_out, batch.edge_src, n)
        m_out_den = ad.index_add_scatter(w_out, batch.edge_src, n) + ad.constant(_MEAN_EPS)
        z = ad.concat([h, ad.div(m_in_num, m_in_den), ad.div(m_out_num, m_out_den)], axis=1)
        hid = ad.relu(_linear(store, f"{self.prefix}.l{k}.env1", z))
        return _linear(store, f"{self.prefix}.l{k}.env2", hid)

    # ---- full forward ------------------------------------------------------

    def _clamped_actions(self, state: str, n: int) -> Tensor:
        onehot = np.zeros((n, NUM_STATES))
        onehot[:, STATES.index(state)] = 1.0
        return ad.constant(onehot)

    def encode_nodes(self, store: ParamStore, batch: GraphBatch,
                     rng: np.random.Generator | None = None, train: bool = False,
                     clamp_state: str | None = None,
                     noise: list[np.ndarray] | None = None) -> Tensor:
        """Node features after the final layer, before readout."""
        if batch.num_nodes == 0:
            raise ValueError("cannot encode an empty graph")
        h = ad.constant(batch.x)
        for k in range(self.layers):
            hn = self.pre_norm(store, h, k)
            if clamp_state is not None:
                actions = self._clamped_actions(clamp_state, batch.num_nodes)
            else:
                actions = self.sample_actions(
                    store, hn, batch, k, rng, train,
                    noise=None if noise is None else noise[k])
            w_in, w_out = self.derive_edge_weights(actions, batch)
            h = self.env_update(store, hn, w_in, w_out, batch, k)
        return h

    def readout_attention(self, store: ParamStore, h: Tensor,
                          batch: GraphBatch) -> Tensor:
        """Gated global attention pooling: sum_v sigmoid(gate) * tanh(embed)."""
        p = f"{self.prefix}.readout"
        gate = ad.sigmoid(_linear(store, f"{p}.gate", h))
        emb = ad.tanh(_linear(store, f"{p}.emb", h))
        return ad.index_add_scatter(gate * emb, batch.node_graph, batch.num_graphs)

    def encode(self, store: ParamStore, batch: GraphBatch,
               rng: np.random.Generator | None = None, train: bool = False,
               clamp_state: str | None = None,
               noise: list[np.ndarray] | None = None) -> Tensor:
        """Graph embeddings, one row per graph in the batch."""
        h = self.encode_nodes(store, batch, rng, train, clamp_state, noise)
        return self.readout_attention(store, h, batch)


def single_graph_batch(g: Cdfg, numeric_maxima=None,
                       features: np.ndarray | None = None) -> GraphBatch:
    return GraphBatch.from_graphs(
        [g], numeric_maxima, None if features is None else [features])
