"""
Immorality recognizer: a small classifier head over frozen joint embeddings.

The head is trained on text embeddings only; images are scored through the
same head via the image side of the joint embedder (zero-shot transfer).
"""
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from app.domain.errors import ContractViolation
from app.domain.models import (
    DEFAULT_JUDGE_THRESHOLD,
    IMMORAL,
    MORAL,
    ClassifierHead,
    ImageTensor,
    LabeledTextSet,
    TokenSequence,
    TrainingConfig,
    TrainingLog,
    Verdict,
)

logger = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)


class HeadNetwork(nn.Module):
    """Dropout -> Linear(D,H) -> Tanh -> Dropout -> Linear(H,1), in float64."""

    def __init__(self, input_dim: int, hidden_dim: int, dropout: float = 0.3):
        super().__init__()
        self.dropout_rate = dropout
        self.layers = nn.Sequential(
            nn.Dropout(dropout),
            nn.Linear(input_dim, hidden_dim),
            nn.Tanh(),
            nn.Dropout(dropout),
            nn.Linear(hidden_dim, 1),
        )
        self.double()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x).squeeze(-1)

    @classmethod
    def from_head(cls, head: ClassifierHead) -> 'HeadNetwork':
        network = cls(head.input_dim, head.hidden_dim, head.dropout)
        hidden, output = network.layers[1], network.layers[4]
        with torch.no_grad():
            hidden.weight.copy_(_tensor(head.w1).T)
            hidden.bias.copy_(_tensor(head.b1))
            output.weight.copy_(_tensor(head.w2).reshape(1, -1))
            output.bias.copy_(_tensor(head.b2).reshape(1))
        network.eval()
        return network

    def to_head(self) -> ClassifierHead:
        state = {name: value.detach().cpu().numpy().astype(np.float64) for name, value in self.state_dict().items()}
        return ClassifierHead(
            w1=state['layers.1.weight'].T.copy(),
            b1=state['layers.1.bias'].copy(),
            w2=state['layers.4.weight'].reshape(-1).copy(),
            b2=state['layers.4.bias'].reshape(1).copy(),
            dropout=self.dropout_rate,
        )


def _tensor(values) -> torch.Tensor:
    return torch.as_tensor(np.asarray(values, dtype=np.float64))


def sigmoid(z):
    return torch.sigmoid(_tensor(z)).numpy()


def bce_loss(logits: Sequence[float], labels: Sequence[int]) -> float:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 labels."""
    z = _tensor(logits).reshape(-1)
    y = _tensor(labels).reshape(-1)
    if z.numel() == 0:
        raise ContractViolation("bce_loss needs at least one logit")
    if z.shape != y.shape:
        raise ContractViolation(f"bce_loss got {z.numel()} logits but {y.numel()} labels")
    return float(F.binary_cross_entropy_with_logits(z, y))


def init_head(input_dim: int, hidden_dim: int, dropout: float, seed: int = 0) -> ClassifierHead:
    """Untrained head with the default Linear initialization, drawn from seed."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return HeadNetwork(input_dim, hidden_dim, dropout).to_head()


def build_optimizer(parameters: Iterable[torch.Tensor], cfg: TrainingConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(
        parameters,
        lr=cfg.learning_rate,
        betas=ADAM_BETAS,
        eps=cfg.epsilon,
        weight_decay=cfg.weight_decay,
    )


def _check_dim(head: ClassifierHead, x: np.ndarray) -> None:
    if x.shape[-1] != head.input_dim:
        raise ContractViolation(f"Embedding has dimension {x.shape[-1]}, head expects {head.input_dim}")


def forward(head: ClassifierHead, e, train_mode: bool = False) -> float:
    """Logit for one embedding; train_mode applies both dropout layers."""
    x = np.asarray(e, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation(f"forward expects a single embedding vector, got shape {x.shape}")
    _check_dim(head, x)
    network = HeadNetwork.from_head(head)
    network.train(train_mode)
    with torch.no_grad():
        return float(network(_tensor(x[None, :]))[0])


def loss_and_gradients(head: ClassifierHead, x, y, train_mode: bool = False) -> Tuple[float, Dict[str, np.ndarray]]:
    """Mean BCE over the batch and its gradient for every head parameter, laid out like the head."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    _check_dim(head, x)
    network = HeadNetwork.from_head(head)
    network.train(train_mode)
    loss = nn.BCEWithLogitsLoss()(network(_tensor(x)), _tensor(y).reshape(-1))
    loss.backward()
    hidden, output = network.layers[1], network.layers[4]
    grads = {
        'w1': hidden.weight.grad.T.numpy().copy(),
        'b1': hidden.bias.grad.numpy().copy(),
        'w2': output.weight.grad.reshape(-1).numpy().copy(),
        'b2': output.bias.grad.numpy().copy(),
    }
    return float(loss), grads


def embed_texts(embedder, texts: Sequence[TokenSequence]) -> np.ndarray:
    return np.stack([np.asarray(embedder.embed_text(t), dtype=np.float64) for t in texts])


def train_classifier(data: LabeledTextSet, embedder, cfg: Optional[TrainingConfig] = None) -> Tuple[ClassifierHead, TrainingLog]:
    cfg = cfg or TrainingConfig()
    if len(data) == 0:
        raise ContractViolation("Training set is empty")
    labels = np.asarray(data.labels, dtype=np.float64)
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ContractViolation("Training labels must be 0 or 1")
    if labels.min() == labels.max():
        raise ContractViolation(f"Training set has a single class (all labels = {int(labels[0])})")
    if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.learning_rate <= 0 or cfg.epsilon <= 0 or cfg.hidden_dim < 1:
        raise ContractViolation(f"Invalid training config: {cfg.to_dict()}")
    if not 0.0 <= cfg.dropout < 1.0:
        raise ContractViolation(f"Dropout must lie in [0,1), got {cfg.dropout}")

    logger.info(
        f"Training classifier head on {len(data)} sentences "
        f"(epochs={cfg.epochs}, lr={cfg.learning_rate}, batch={cfg.batch_size}, seed={cfg.seed})")
    features = _tensor(embed_texts(embedder, data.texts))
    targets = _tensor(labels)

    torch.manual_seed(cfg.seed)
    network = HeadNetwork(features.shape[1], cfg.hidden_dim, cfg.dropout)
    optimizer = build_optimizer(network.parameters(), cfg)
    criterion = nn.BCEWithLogitsLoss()
    log = TrainingLog()

    n = len(labels)
    network.train()
    for epoch in range(cfg.epochs):
        order = torch.randperm(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            optimizer.zero_grad()
            loss = criterion(network(features[batch]), targets[batch])
            loss.backward()
            optimizer.step()
            total += loss.item() * len(batch)
        log.epoch_losses.append(total / n)
        if (epoch + 1) % 50 == 0:
            logger.debug(f"epoch {epoch + 1}/{cfg.epochs} loss={log.epoch_losses[-1]:.6f}")

    network.eval()
    with torch.no_grad():
        logits = network(features).numpy()
    log.final_accuracy = float(np.mean((logits >= 0.0) == (labels == 1.0)))
    logger.info(f"Training finished: loss={log.epoch_losses[-1]:.6f} accuracy={log.final_accuracy:.4f}")
    return network.to_head(), log


def _score_embeddings(network: HeadNetwork, embeddings: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        return torch.sigmoid(network(_tensor(embeddings))).numpy()


def score_embedding(head: ClassifierHead, e) -> float:
    return float(sigmoid(forward(head, e)))


def score_text(head: ClassifierHead, embedder, t: TokenSequence) -> float:
    return score_embedding(head, embedder.embed_text(t))


def score_image(head: ClassifierHead, embedder, img: ImageTensor) -> float:
    return score_embedding(head, embedder.embed_image(img))


def score_texts(head: ClassifierHead, embedder, texts: Sequence[TokenSequence]) -> List[float]:
    return [score_text(head, embedder, t) for t in texts]


def score_images(head: ClassifierHead, embedder, images: Sequence[ImageTensor]) -> List[float]:
    return [score_image(head, embedder, img) for img in images]


def judge(score: float, threshold: float = DEFAULT_JUDGE_THRESHOLD) -> Verdict:
    if not 0.0 < threshold < 1.0:
        raise ContractViolation(f"Judge threshold must lie in (0,1), got {threshold}")
    if not np.isfinite(score):
        raise ContractViolation(f"Score must be finite, got {score}")
    return Verdict(score=float(score), threshold=threshold, label=IMMORAL if score >= threshold else MORAL)


def screen_prompt(head: ClassifierHead, embedder, t: TokenSequence,
                  threshold: float = DEFAULT_JUDGE_THRESHOLD) -> Verdict:
    """Text-side judge applied before anything is generated from t."""
    return judge(score_text(head, embedder, t), threshold)


class Recognizer:
    """A trained head bound to its embedder and decision threshold.

    The head is loaded into one HeadNetwork in eval mode and reused for every
    score, so attribution can call it from worker threads.
    """

    def __init__(self, head: ClassifierHead, embedder, threshold: float = DEFAULT_JUDGE_THRESHOLD):
        if head.input_dim != embedder.dim:
            raise ContractViolation(f"Head expects {head.input_dim}-d embeddings, embedder produces {embedder.dim}-d")
        judge(0.0, threshold)
        self.head = head
        self.embedder = embedder
        self.threshold = threshold
        self.network = HeadNetwork.from_head(head)

    def _score(self, e) -> float:
        x = np.asarray(e, dtype=np.float64)
        _check_dim(self.head, x)
        return float(_score_embeddings(self.network, x[None, :])[0])

    def score_text(self, t: TokenSequence) -> float:
        return self._score(self.embedder.embed_text(t))

    def score_image(self, img: ImageTensor) -> float:
        return self._score(self.embedder.embed_image(img))

    def score_texts(self, texts: Sequence[TokenSequence]) -> List[float]:
        return [self.score_text(t) for t in texts]

    def score_images(self, images: Sequence[ImageTensor]) -> List[float]:
        return [self.score_image(img) for img in images]

    def judge(self, score: float) -> Verdict:
        return judge(score, self.threshold)

    def screen_prompt(self, t: TokenSequence) -> Verdict:
        return judge(self.score_text(t), self.threshold)
