"""Multimodal QoR predictor: graph encoder fused with text embeddings.

The graph vector queries the text embedding through multi-head scaled
dot-product attention (the text acts as keys and values; a pooled embedding
is a length-1 sequence, token-level providers plug in unchanged). Alignment
MLPs bring the graph vector and the fused vector to a common width, a gate
blends them, and five independent heads predict the normalized targets.
Ablation variants reuse the same trainer: ``graph_only`` feeds the aligned
graph vector straight to the heads, ``text_only`` does the same with the
aligned text embedding.

Training minimizes the sum of the five per-target RMSEs with minibatch Adam
and checkpoints whenever the validation aggregate improves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tensor
from .dataset import GraphTextSample, TARGET_NAMES, TargetScaler
from .ecognn import EcognnEncoder, GraphBatch, _glorot, _linear


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite loss at epoch {epoch}")


VARIANTS = ("mpm", "graph_only", "text_only")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 0.001
    hidden: int = 128
    epochs: int = 500
    split: tuple = (0.7, 0.15, 0.15)
    seed: int = 0
    layers: int = 4
    n_heads: int = 4
    variant: str = "mpm"
    tau_min: float = 0.1
    head_hidden: int | None = None
    rmse_target: float | None = None  # early stop once train aggregate drops below

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {self.split}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.hidden % self.n_heads != 0:
            raise ValueError(f"n_heads={self.n_heads} must divide hidden={self.hidden}")


class MpmModel:
    """Parameter container plus forward passes for all three variants."""

    def __init__(self, d_node: int, d_text: int, cfg: TrainConfig,
                 store: ParamStore | None = None,
                 rng: np.random.Generator | None = None):
        self.d_node = d_node
        self.d_text = d_text
        self.cfg = cfg
        self.encoder = EcognnEncoder(d_in=d_node, hidden=cfg.hidden,
                                     layers=cfg.layers, tau_min=cfg.tau_min)
        self.store = store if store is not None else ParamStore()
        if store is None:
            self._register(rng or np.random.default_rng(cfg.seed))

    def _register(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        store = self.store
        h = cfg.hidden
        if cfg.variant in ("mpm", "graph_only"):
            self.encoder.register(store, rng)
        if cfg.variant == "mpm":
            for name, fan_in in (("q", h), ("k", self.d_text), ("v", self.d_text)):
                store.add(f"attn.{name}.w", _glorot(rng, fan_in, h))
                store.add(f"attn.{name}.b", np.zeros(h))
            store.add("attn.o.w", _glorot(rng, h, h))
            store.add("attn.o.b", np.zeros(h))
            store.add("gate.w", _glorot(rng, 2 * h, h))
            store.add("gate.b", np.zeros(h))
        if cfg.variant in ("mpm", "graph_only"):
            store.add("align_g.1.w", _glorot(rng, h, h))
            store.add("align_g.1.b", np.zeros(h))
            store.add("align_g.2.w", _glorot(rng, h, h))
            store.add("align_g.2.b", np.zeros(h))
        if cfg.variant == "mpm":
            store.add("align_f.1.w", _glorot(rng, h, h))
            store.add("align_f.1.b", np.zeros(h))
            store.add("align_f.2.w", _glorot(rng, h, h))
            store.add("align_f.2.b", np.zeros(h))
        if cfg.variant == "text_only":
            store.add("align_s.1.w", _glorot(rng, self.d_text, h))
            store.add("align_s.1.b", np.zeros(h))
            store.add("align_s.2.w", _glorot(rng, h, h))
            store.add("align_s.2.b", np.zeros(h))
        hh = cfg.head_hidden or max(8, h // 2)
        for name in TARGET_NAMES:
            store.add(f"head.{name}.1.w", _glorot(rng, h, hh))
            store.add(f"head.{name}.1.b", np.zeros(hh))
            store.add(f"head.{name}.2.w", _glorot(rng, hh, 1))
            store.add(f"head.{name}.2.b", np.zeros(1))

    # ---- building blocks ---------------------------------------------------

    def _mlp2(self, prefix: str, x: Tensor) -> Tensor:
        return _linear(self.store, f"{prefix}.2",
                       ad.relu(_linear(self.store, f"{prefix}.1", x)))

    def mha_fuse(self, h_graph: Tensor, h_text: Tensor) -> Tensor:
        """Multi-head attention with the graph vector as query, text as key/value.

        ``h_graph`` is (1, hidden) and ``h_text`` is (tokens, d_text); a pooled
        embedding is simply the tokens == 1 case.
        """
        store = self.store
        h = self.cfg.hidden
        dh = h // self.cfg.n_heads
        q = _linear(store, "attn.q", h_graph)
        k = _linear(store, "attn.k", h_text)
        v = _linear(store, "attn.v", h_text)
        heads = []
        for w in range(self.cfg.n_heads):
            qw = ad.col_slice(q, w * dh, (w + 1) * dh)
            kw = ad.col_slice(k, w * dh, (w + 1) * dh)
            vw = ad.col_slice(v, w * dh, (w + 1) * dh)
            scores = ad.matmul(qw, ad.transpose(kw)) * ad.constant(1.0 / np.sqrt(dh))
            heads.append(ad.matmul(ad.softmax(scores, axis=1), vw))
        return _linear(store, "attn.o", ad.concat(heads, axis=1))

    def _fuse_single_token(self, h_text: Tensor) -> Tensor:
        # tokens == 1: the attention weight is exactly 1, so the fused vector
        # reduces to the value projection; this lets whole batches fuse at once
        return _linear(self.store, "attn.o", _linear(self.store, "attn.v", h_text))

    def gated_combine(self, a: Tensor, b: Tensor) -> Tensor:
        g = ad.sigmoid(_linear(self.store, "gate", ad.concat([a, b], axis=1)))
        one = ad.constant(1.0)
        return g * a + (one - g) * b

    def heads(self, h: Tensor) -> Tensor:
        return ad.concat([self._mlp2(f"head.{name}", h) for name in TARGET_NAMES], axis=1)

    # ---- forward -----------------------------------------------------------

    def forward(self, batch: GraphBatch, h_text: Tensor,
                rng: np.random.Generator | None = None, train: bool = False) -> Tensor:
        """Predictions (num_graphs, 5); ``h_text`` holds one pooled row per graph."""
        variant = self.cfg.variant
        if variant == "text_only":
            fused = self._mlp2("align_s", h_text)
        else:
            h_graph = self.encoder.encode(self.store, batch, rng, train)
            if variant == "graph_only":
                fused = self._mlp2("align_g", h_graph)
            else:
                h_fuse = self._fuse_single_token(h_text)
                fused = self.gated_combine(self._mlp2("align_g", h_graph),
                                           self._mlp2("align_f", h_fuse))
        return self.heads(fused)

    def predict(self, sample: GraphTextSample, scaler: TargetScaler | None = None,
                rng: np.random.Generator | None = None,
                train: bool = False) -> "QorPrediction":
        batch = GraphBatch.from_graphs([sample.graph],
                                       features=[sample.node_features])
        h_text = ad.constant(sample.text_embedding.vector.reshape(1, -1))
        if self.cfg.variant == "mpm":
            # single-sample path goes through full attention; identical to the
            # pooled fast path when the embedding is one token
            h_graph = self.encoder.encode(self.store, batch, rng, train)
            h_fuse = self.mha_fuse(h_graph, h_text)
            fused = self.gated_combine(self._mlp2("align_g", h_graph),
                                       self._mlp2("align_f", h_fuse))
            out = self.heads(fused)
        else:
            out = self.forward(batch, h_text, rng, train)
        normalized = out.data[0].copy()
        denorm = scaler.denormalize(normalized) if scaler is not None else None
        return QorPrediction(normalized=normalized, denormalized=denorm)

    def predict_batch(self, samples: list[GraphTextSample],
                      rng: np.random.Generator | None = None,
                      train: bool = False) -> np.ndarray:
        out = np.empty((len(samples), 5))
        bs = max(1, self.cfg.batch_size)
        for lo in range(0, len(samples), bs):
            chunk = samples[lo:lo + bs]
            if self.cfg.variant == "text_only":
                batch = None
            else:
                batch = GraphBatch.from_graphs([s.graph for s in chunk],
                                               features=[s.node_features for s in chunk])
            h_text = ad.constant(np.vstack([s.text_embedding.vector for s in chunk]))
            if batch is None:
                batch = GraphBatch(x=np.zeros((0, 1)), edge_src=np.zeros(0, np.int64),
                                   edge_dst=np.zeros(0, np.int64),
                                   node_graph=np.zeros(0, np.int64),
                                   num_graphs=len(chunk))
            out[lo:lo + len(chunk)] = self.forward(batch, h_text, rng, train).data
        return out

    # ---- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        self.store.save(path, hyperparams={
            "d_node": self.d_node, "d_text": self.d_text,
            "hidden": self.cfg.hidden, "layers": self.cfg.layers,
            "n_heads": self.cfg.n_heads, "variant": self.cfg.variant,
            "tau_min": self.cfg.tau_min,
            "head_hidden": self.cfg.head_hidden or max(8, self.cfg.hidden // 2),
        })

    @classmethod
    def load(cls, path: str | Path) -> "MpmModel":
        store, hyper = ParamStore.load(path)
        cfg = TrainConfig(hidden=int(hyper["hidden"]), layers=int(hyper["layers"]),
                          n_heads=int(hyper["n_heads"]), variant=hyper["variant"],
                          tau_min=float(hyper["tau_min"]),
                          head_hidden=int(hyper["head_hidden"]))
        return cls(d_node=int(hyper["d_node"]), d_text=int(hyper["d_text"]),
                   cfg=cfg, store=store)


@dataclass(frozen=True)
class QorPrediction:
    normalized: np.ndarray
    denormalized: np.ndarray | None = None


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def rmse(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError(f"rmse: shapes {preds.shape} vs {targets.shape}")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


def mape(preds, targets) -> float:
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.size == 0:
        raise ValueError(f"mape: shapes {preds.shape} vs {targets.shape}")
    if np.any(targets == 0):
        raise ValueError("mape: zero target value")
    return float(np.mean(np.abs((preds - targets) / targets)))


def per_target_rmse(preds: np.ndarray, targets: np.ndarray) -> dict[str, float]:
    """Columnwise RMSE plus the additive aggregate under key ``all``."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    out = {name: rmse(preds[:, i], targets[:, i]) for i, name in enumerate(TARGET_NAMES)}
    out["all"] = float(sum(out[name] for name in TARGET_NAMES))
    return out


def per_target_mape(preds: np.ndarray, targets: np.ndarray) -> dict[str, float]:
    out = {name: mape(preds[:, i], targets[:, i]) for i, name in enumerate(TARGET_NAMES)}
    out["all"] = float(sum(out[name] for name in TARGET_NAMES))
    return out


# ---------------------------------------------------------------------------
# split and training
# ---------------------------------------------------------------------------

def split_dataset(samples: list, seed: int) -> tuple[list, list, list]:
    """Seeded shuffle, then 70/15/15 (train/test/val); remainder goes to train."""
    if len(samples) < 10:
        raise ValueError(f"need at least 10 samples to split, got {len(samples)}")
    perm = np.random.default_rng(seed).permutation(len(samples))
    n_test = int(0.15 * len(samples))
    n_val = int(0.15 * len(samples))
    test_idx = perm[:n_test]
    val_idx = perm[n_test:n_test + n_val]
    train_idx = perm[n_test + n_val:]
    pick = lambda idx: [samples[i] for i in idx]
    return pick(train_idx), pick(test_idx), pick(val_idx)


def _split_by_fractions(samples: list, split: tuple, seed: int):
    if split == (0.7, 0.15, 0.15):
        return split_dataset(samples, seed)
    perm = np.random.default_rng(seed).permutation(len(samples))
    n_test = int(split[1] * len(samples))
    n_val = int(split[2] * len(samples))
    pick = lambda idx: [samples[i] for i in idx]
    return (pick(perm[n_test + n_val:]), pick(perm[:n_test]),
            pick(perm[n_test:n_test + n_val]))


def _batch_loss(model: MpmModel, chunk: list[GraphTextSample],
                rng: np.random.Generator) -> Tensor:
    if model.cfg.variant == "text_only":
        batch = GraphBatch(x=np.zeros((0, 1)), edge_src=np.zeros(0, np.int64),
                           edge_dst=np.zeros(0, np.int64),
                           node_graph=np.zeros(0, np.int64), num_graphs=len(chunk))
    else:
        batch = GraphBatch.from_graphs([s.graph for s in chunk],
                                       features=[s.node_features for s in chunk])
    h_text = ad.constant(np.vstack([s.text_embedding.vector for s in chunk]))
    preds = model.forward(batch, h_text, rng, train=True)
    targets = ad.constant(np.vstack([s.targets for s in chunk]))
    diff = preds - targets
    col_mse = ad.mean_rows(diff * diff)
    rmse_vec = ad.sqrt(col_mse + ad.constant(1e-12))
    return ad.sum_all(rmse_vec)


@dataclass
class TrainResult:
    model: MpmModel
    history: list[dict]
    best_epoch: int
    best_val_rmse: float
    test_samples: list = field(default_factory=list)


def evaluate_model(model: MpmModel, samples: list[GraphTextSample]) -> dict[str, float]:
    preds = model.predict_batch(samples, train=False)
    targets = np.vstack([s.targets for s in samples])
    return per_target_rmse(preds, targets)


def train(dataset_samples: list[GraphTextSample], cfg: TrainConfig,
          d_text: int | None = None) -> TrainResult:
    """Minibatch Adam on the summed per-target RMSE; keeps the best-validation
    parameters. When the split assigns no validation samples, the training set
    doubles as the validation set (overfit-style runs)."""
    d_node = dataset_samples[0].node_features.shape[1]
    d_text = d_text or dataset_samples[0].text_embedding.d_text
    rng = np.random.default_rng(cfg.seed)
    model = MpmModel(d_node=d_node, d_text=d_text, cfg=cfg, rng=rng)
    train_set, test_set, val_set = _split_by_fractions(dataset_samples, cfg.split, cfg.seed)
    eval_set = val_set if val_set else train_set

    history: list[dict] = []
    best = (np.inf, -1, None)  # (val aggregate, epoch, snapshot)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for lo in range(0, len(train_set), cfg.batch_size):
            chunk = [train_set[i] for i in perm[lo:lo + cfg.batch_size]]
            model.store.zero_grad()
            loss = _batch_loss(model, chunk, rng)
            if not np.isfinite(loss.data):
                raise TrainingDiverged(epoch)
            ad.backward(loss)
            model.store.adam_step(cfg.lr)
            epoch_loss += loss.item() * len(chunk)
        train_rmse = epoch_loss / len(train_set)
        val_metrics = evaluate_model(model, eval_set)
        row = {"epoch": epoch, "train_rmse": train_rmse}
        row.update({f"val_{k}": v for k, v in val_metrics.items()})
        history.append(row)
        if val_metrics["all"] < best[0]:
            best = (val_metrics["all"], epoch, model.store.snapshot())
        if cfg.rmse_target is not None and val_metrics["all"] < cfg.rmse_target:
            break
    if best[2] is not None:
        model.store.load_snapshot(best[2])
    return TrainResult(model=model, history=history, best_epoch=best[1],
                       best_val_rmse=best[0], test_samples=test_set)


def write_metrics_csv(history: list[dict], path: str | Path) -> None:
    columns = ["epoch", "train_rmse"] + [f"val_{k}" for k in TARGET_NAMES] + ["val_all"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in history:
            writer.writerow([row["epoch"]] + [f"{row[c]:.10g}" for c in columns[1:]])
