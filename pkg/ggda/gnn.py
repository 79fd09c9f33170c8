"""Two layer graph convolutional encoder with a linear classifier, trained on weighted vertex domains."""

import dataclasses
import logging
import os
from typing import Dict, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ggda.errors import DataError, NumericalError
from ggda.graph_model import DomainMeasure, GraphPool

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wc", "bc")
PARAMS_DATA_FILENAME = "params.f32"
PARAMS_META_FILENAME = "params.meta"


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Full batch Adam training settings."""

    epochs: int = 200
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    hidden: int = 64
    seed: int = 0
    dropout: float = 0.5
    warm_start: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError(f"Epoch count must be >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise DataError(f"Learning rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise DataError(f"Weight decay must be >= 0, got {self.weight_decay}")
        if self.hidden < 1:
            raise DataError(f"Hidden width must be >= 1, got {self.hidden}")
        if not 0 <= self.dropout < 1:
            raise DataError(f"Dropout probability must be in [0, 1), got {self.dropout}")


@dataclasses.dataclass(frozen=True, eq=False)
class ModelParams:
    """Encoder weights (W1, b1, W2, b2) and classifier weights (Wc, bc)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wc: np.ndarray
    bc: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            value = np.array(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(value)):
                raise NumericalError(f"Non finite values in model parameter {name}")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        d, d_h = self.W1.shape
        n_classes = self.Wc.shape[1]
        expected = {"b1": (d_h,), "W2": (d_h, d_h), "b2": (d_h,), "Wc": (d_h, n_classes), "bc": (n_classes,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DataError(f"Model parameter {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def d_h(self) -> int:
        """Hidden width."""
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        """Output class count."""
        return self.Wc.shape[1]

    def as_dict(self) -> Dict[str, np.ndarray]:
        """Parameters by name."""
        return {name: getattr(self, name) for name in PARAM_NAMES}


class GcnModel(torch.nn.Module):
    """Z = ReLU(Â ReLU(Â X W1 + b1) W2 + b2), logits = Z Wc + bc."""

    def __init__(self, d: int, hidden: int, n_classes: int, dropout: float = 0.0):
        super().__init__()
        self.W1 = torch.nn.Parameter(torch.empty(d, hidden, dtype=torch.float64))
        self.b1 = torch.nn.Parameter(torch.zeros(hidden, dtype=torch.float64))
        self.W2 = torch.nn.Parameter(torch.empty(hidden, hidden, dtype=torch.float64))
        self.b2 = torch.nn.Parameter(torch.zeros(hidden, dtype=torch.float64))
        self.Wc = torch.nn.Parameter(torch.empty(hidden, n_classes, dtype=torch.float64))
        self.bc = torch.nn.Parameter(torch.zeros(n_classes, dtype=torch.float64))
        for weight in (self.W1, self.W2, self.Wc):
            torch.nn.init.xavier_uniform_(weight)
        self.dropout = dropout

    @classmethod
    def from_params(cls, params: ModelParams, dropout: float = 0.0) -> "GcnModel":
        """Build module holding a copy of params."""
        model = cls(params.W1.shape[0], params.d_h, params.n_classes, dropout)
        with torch.no_grad():
            for name, value in params.as_dict().items():
                getattr(model, name).copy_(torch.from_numpy(np.array(value)))
        return model

    def to_params(self) -> ModelParams:
        """Snapshot current weights."""
        return ModelParams(**{name: getattr(self, name).detach().numpy().copy() for name in PARAM_NAMES})

    def forward(self, adjacency: torch.Tensor, features: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = F.relu(torch.sparse.mm(adjacency, features @ self.W1) + self.b1)
        h = F.dropout(h, p=self.dropout, training=self.training)
        z = F.relu(torch.sparse.mm(adjacency, h @ self.W2) + self.b2)
        return z, z @ self.Wc + self.bc


def torch_adjacency(pool: GraphPool) -> torch.Tensor:
    """Normalized pool adjacency as a sparse tensor."""
    coo = pool.normalized_adjacency.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
    return torch.sparse_coo_tensor(indices, torch.from_numpy(coo.data.astype(np.float64)), coo.shape).coalesce()


def _check_pool(pool: GraphPool, params: ModelParams) -> None:
    if pool.features.shape[1] != params.W1.shape[0]:
        raise DataError(f"Pool feature dimension {pool.features.shape[1]} does not match model ({params.W1.shape[0]})")


def forward(pool: GraphPool, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """Inference pass over the whole pool, returning (embeddings, logits)."""
    _check_pool(pool, params)
    model = GcnModel.from_params(params)
    model.eval()
    with torch.no_grad():
        z, logits = model(torch_adjacency(pool), torch.from_numpy(np.array(pool.features)))
    return z.numpy(), logits.numpy()


def _domain_loss(model: GcnModel, adjacency, features, domain: DomainMeasure) -> torch.Tensor:
    _, logits = model(adjacency, features)
    ids = torch.from_numpy(np.array(domain.vertex_ids))
    losses = F.cross_entropy(logits[ids], torch.from_numpy(np.array(domain.labels)), reduction="none")
    return (torch.from_numpy(np.array(domain.weights)) * losses).sum()


def loss_and_gradient(
    params: ModelParams, pool: GraphPool, domain: DomainMeasure
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Weighted cross entropy Σ h_l ℓ(logits_l, y_l) over domain vertices, and its gradient, dropout off."""
    _check_pool(pool, params)
    model = GcnModel.from_params(params)
    model.eval()
    loss = _domain_loss(model, torch_adjacency(pool), torch.from_numpy(np.array(pool.features)), domain)
    loss.backward()
    return float(loss.item()), {name: getattr(model, name).grad.numpy().copy() for name in PARAM_NAMES}


def train(
    domain: DomainMeasure, pool: GraphPool, params_init: Optional[ModelParams], cfg: TrainConfig
) -> ModelParams:
    """
    Train a model on a weighted domain, message passing over the whole pool.

    Parameters are freshly initialized from cfg.seed, unless cfg.warm_start is set and params_init is given.
    """
    if len(domain) == 0 or not np.asarray(domain.weights).sum() > 0:
        raise DataError("Cannot train on a zero weight domain")
    if np.asarray(domain.labels).max() >= pool.n_classes:
        raise DataError(f"Domain labels exceed class count {pool.n_classes}")
    adjacency = torch_adjacency(pool)
    features = torch.from_numpy(np.array(pool.features))
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        if cfg.warm_start and params_init is not None:
            _check_pool(pool, params_init)
            model = GcnModel.from_params(params_init, cfg.dropout)
        else:
            model = GcnModel(pool.features.shape[1], cfg.hidden, pool.n_classes, cfg.dropout)
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
        model.train()
        for _ in range(cfg.epochs):
            optimizer.zero_grad()
            loss = _domain_loss(model, adjacency, features, domain)
            loss.backward()
            optimizer.step()
    if not torch.isfinite(loss):
        raise NumericalError("Training loss diverged")
    logging.getLogger().debug(f"Trained on {len(domain)} vertices for {cfg.epochs} epochs, last loss {loss.item():.4g}")
    return model.to_params()


def margin_and_prediction(logits_row: np.ndarray) -> Tuple[float, int]:
    """Top-1 minus top-2 logit, and predicted class (lowest index on ties)."""
    margins, predictions = margins_and_predictions(np.asarray(logits_row)[None, :])
    return float(margins[0]), int(predictions[0])


def margins_and_predictions(logits: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Row-wise margin_and_prediction."""
    logits = np.asarray(logits)
    predictions = np.argmax(logits, axis=1)
    if logits.shape[1] < 2:
        return np.zeros(logits.shape[0]), predictions
    top = np.sort(logits, axis=1)
    return top[:, -1] - top[:, -2], predictions


def label_score(logits_row: np.ndarray, label: int) -> float:
    """Logit of label minus best rival logit, positive iff the model agrees with label."""
    return float(label_scores(np.asarray(logits_row)[None, :], np.array([label]))[0])


def label_scores(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Row-wise label_score."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise DataError(f"Labels must be in [0, {n_classes})")
    rows = np.arange(logits.shape[0])
    rivals = logits.copy()
    rivals[rows, labels] = -np.inf
    return logits[rows, labels] - rivals.max(axis=1)


def save_params(params: ModelParams, dirpath: str) -> None:
    """Write params.f32 (little-endian float32, row-major, in parameter order) and its params.meta shape header."""
    os.makedirs(dirpath, exist_ok=True)
    with open(os.path.join(dirpath, PARAMS_META_FILENAME), "wt") as f:
        for name, value in params.as_dict().items():
            rows, cols = value.shape if value.ndim == 2 else (value.shape[0], 1)
            f.write(f"{name} {rows} {cols}\n")
    np.concatenate([v.ravel() for v in params.as_dict().values()]).astype("<f4").tofile(
        os.path.join(dirpath, PARAMS_DATA_FILENAME)
    )


def load_params(dirpath: str) -> ModelParams:
    """Read a checkpoint written by save_params."""
    meta_filepath = os.path.join(dirpath, PARAMS_META_FILENAME)
    shapes = {}
    with open(meta_filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            fields = line.split()
            if len(fields) != 3 or fields[0] not in PARAM_NAMES or not all(s.isdigit() for s in fields[1:]):
                raise DataError(f"{meta_filepath}:{line_number}: expected 'name rows cols', got {line.rstrip()!r}")
            shapes[fields[0]] = (int(fields[1]), int(fields[2]))
    if set(shapes) != set(PARAM_NAMES):
        raise DataError(f"{meta_filepath}: expected parameters {', '.join(PARAM_NAMES)}")
    data = np.fromfile(os.path.join(dirpath, PARAMS_DATA_FILENAME), dtype="<f4").astype(np.float64)
    expected = sum(rows * cols for rows, cols in shapes.values())
    if data.size != expected:
        raise DataError(f"{dirpath}: expected {expected} parameter values, got {data.size}")
    values = {}
    offset = 0
    for name in PARAM_NAMES:
        rows, cols = shapes[name]
        chunk = data[offset : offset + rows * cols]
        values[name] = chunk if name.startswith("b") else chunk.reshape(rows, cols)
        offset += rows * cols
    return ModelParams(**values)
