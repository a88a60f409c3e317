"""Premise retrieval: encoder, contrastive training, drift penalty, recall.

The encoder is deliberately small and fully reproducible: hashed byte
n-grams (n = 1, 2, 3) plus a bias column, one linear map, then L2
normalization. Training is plain SGD with linear warmup, cosine decay,
gradient clipping, and an optional quadratic penalty that anchors parameters
to an earlier task's weights, weighted by their estimated importance there
(squared-gradient estimate of curvature).

All gradients are computed analytically in closed form; tests cross-check
them against central finite differences.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .corpus import Corpus, Premise, Theorem
from .errors import (
    CorruptDocument,
    EmptyDataset,
    EmptyGroundTruth,
    IoFailure,
    NoDatasets,
    ShapeMismatch,
    StaleIndex,
)

NEGATIVES_PER_EXAMPLE = 3
NGRAM_SIZES = (1, 2, 3)

# Index 0 of every feature vector is a constant bias so empty text still
# embeds deterministically.
_BIAS_SLOT = 1


@lru_cache(maxsize=65536)
def ngram_features(text: str, n_features: int) -> np.ndarray:
    """Hashed byte n-gram counts with a leading bias entry.

    Deterministic across runs and platforms (crc32, not Python's randomized
    hash). Cached: callers must not mutate the returned array.
    """
    if n_features < 2:
        raise ValueError("need at least one hash bucket beyond the bias slot")
    phi = np.zeros(n_features, dtype=np.float64)
    phi[0] = 1.0
    raw = text.encode("utf-8")
    buckets = n_features - _BIAS_SLOT
    for n in NGRAM_SIZES:
        for i in range(len(raw) - n + 1):
            slot = _BIAS_SLOT + zlib.crc32(raw[i:i + n]) % buckets
            phi[slot] += 1.0
    phi.flags.writeable = False
    return phi


@dataclass(frozen=True)
class EmbeddingModel:
    """Linear text encoder with unit-norm outputs."""

    weight: np.ndarray  # (dim, n_features) float64

    @property
    def dim(self) -> int:
        return self.weight.shape[0]

    @property
    def n_features(self) -> int:
        return self.weight.shape[1]

    @property
    def version_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.dim}x{self.n_features}:".encode())
        h.update(np.ascontiguousarray(self.weight).tobytes())
        return h.hexdigest()[:16]

    @classmethod
    def random_init(
        cls, dim: int, n_features: int = 1024, seed: int = 0, scale: float = 0.1
    ) -> EmbeddingModel:
        rng = np.random.default_rng(seed)
        return cls(weight=rng.normal(0.0, scale, size=(dim, n_features)))

    def flat(self) -> np.ndarray:
        return self.weight.reshape(-1).copy()

    def with_flat(self, theta: np.ndarray) -> EmbeddingModel:
        if theta.size != self.weight.size:
            raise ShapeMismatch(
                f"expected {self.weight.size} parameters, got {theta.size}"
            )
        return replace(self, weight=theta.reshape(self.weight.shape).copy())

    def embed(self, text: str) -> np.ndarray:
        phi = ngram_features(text, self.n_features)
        u = self.weight @ phi
        norm = float(np.linalg.norm(u))
        if norm <= 0.0:
            # degenerate weights; fall back to a fixed unit vector
            e = np.zeros(self.dim)
            e[0] = 1.0
            return e
        return u / norm

    def embed_many(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([self.embed(t) for t in texts])


# -- losses -------------------------------------------------------------------

def contrastive_loss(
    state_emb: np.ndarray, pos_emb: np.ndarray, neg_embs: np.ndarray
) -> float:
    """Negative log-likelihood of the positive under softmax of similarities.

    Temperature is 1; inputs are expected unit-norm so dot products are
    cosine similarities.
    """
    state_emb = np.asarray(state_emb, dtype=np.float64)
    pos_emb = np.asarray(pos_emb, dtype=np.float64)
    neg_embs = np.asarray(neg_embs, dtype=np.float64).reshape(-1, state_emb.shape[-1]) \
        if np.asarray(neg_embs).size else np.zeros((0, state_emb.shape[-1]))
    if pos_emb.shape != state_emb.shape:
        raise ShapeMismatch("state and positive embeddings differ in dimension")
    sims = np.concatenate(([float(state_emb @ pos_emb)], neg_embs @ state_emb))
    m = float(np.max(sims))
    return m + math.log(float(np.sum(np.exp(sims - m)))) - sims[0]


@dataclass(frozen=True)
class EwcTerm:
    """Quadratic anchor to a previous task's parameters."""

    lam: float
    fisher: np.ndarray
    anchor: np.ndarray

    def check(self, n_params: int) -> None:
        if self.fisher.size != n_params or self.anchor.size != n_params:
            raise ShapeMismatch(
                f"penalty terms sized {self.fisher.size}/{self.anchor.size}, "
                f"model has {n_params} parameters"
            )


def ewc_penalty(theta: np.ndarray, term: EwcTerm) -> float:
    term.check(theta.size)
    delta = theta - term.anchor
    return 0.5 * term.lam * float(np.sum(term.fisher * delta * delta))


def ewc_penalty_grad(theta: np.ndarray, term: EwcTerm) -> np.ndarray:
    term.check(theta.size)
    return term.lam * term.fisher * (theta - term.anchor)


@dataclass(frozen=True)
class TrainingExample:
    state: str
    positive: Premise
    negatives: tuple[Premise, ...]

    def texts(self) -> list[str]:
        return [self.state, self.positive.text, *(n.text for n in self.negatives)]


def example_loss_and_grad(
    model: EmbeddingModel, example: TrainingExample
) -> tuple[float, np.ndarray]:
    """Contrastive loss and its exact gradient with respect to the weights.

    Differentiates through the L2 normalization; rows whose pre-normalization
    vector vanishes use the fixed fallback embedding and contribute zero
    gradient there.
    """
    texts = example.texts()
    n_texts = len(texts)
    phi = np.stack([ngram_features(t, model.n_features) for t in texts])
    u = phi @ model.weight.T
    norms = np.linalg.norm(u, axis=1)
    e = np.zeros_like(u)
    live = norms > 0.0
    e[live] = u[live] / norms[live, None]
    if not live.all():
        e[~live, 0] = 1.0

    sims = e[1:] @ e[0]
    m = float(np.max(sims))
    exp = np.exp(sims - m)
    probs = exp / float(np.sum(exp))
    loss = m + math.log(float(np.sum(exp))) - sims[0]

    dsims = probs.copy()
    dsims[0] -= 1.0
    grad_e = np.zeros_like(e)
    grad_e[0] = dsims @ e[1:]
    grad_e[1:] = dsims[:, None] * e[0][None, :]

    grad_u = np.zeros_like(u)
    for i in range(n_texts):
        if not live[i]:
            continue
        gi = grad_e[i]
        grad_u[i] = (gi - float(gi @ e[i]) * e[i]) / norms[i]
    grad_w = grad_u.T @ phi
    return loss, grad_w


def batch_loss_and_grad(
    model: EmbeddingModel,
    batch: list[TrainingExample],
    ewc: EwcTerm | None = None,
) -> tuple[float, np.ndarray]:
    """Mean example loss (plus optional anchor penalty) and its gradient."""
    if not batch:
        raise EmptyDataset("empty batch")
    total = 0.0
    grad = np.zeros_like(model.weight)
    for ex in batch:
        loss, g = example_loss_and_grad(model, ex)
        total += loss
        grad += g
    total /= len(batch)
    grad /= len(batch)
    if ewc is not None:
        theta = model.weight.reshape(-1)
        total += ewc_penalty(theta, ewc)
        grad += ewc_penalty_grad(theta, ewc).reshape(model.weight.shape)
    return total, grad


def compute_fisher(
    model: EmbeddingModel,
    examples: list[TrainingExample],
    batch_size: int = 16,
) -> np.ndarray:
    """Parameter importance: mean over batches of the squared batch gradient."""
    if not examples:
        raise EmptyDataset("no examples to estimate parameter importance from")
    fisher = np.zeros(model.weight.size)
    n_batches = 0
    for lo in range(0, len(examples), batch_size):
        _, grad = batch_loss_and_grad(model, examples[lo:lo + batch_size])
        fisher += grad.reshape(-1) ** 2
        n_batches += 1
    return fisher / n_batches


# -- example mining ------------------------------------------------------------

def mine_training_examples(
    theorems: list[Theorem],
    corpus: Corpus,
    seed: int = 0,
) -> list[TrainingExample]:
    """One example per (traced tactic, referenced premise) pair.

    Three pairwise-distinct negatives per example, one from the positive's
    own file whenever that file has another premise. Tactic references that
    do not resolve in the corpus are skipped, as are examples for which three
    distinct negatives cannot be found.
    """
    pool = corpus.all_premises()
    by_file: dict[str, list[int]] = {}
    for i, p in enumerate(pool):
        by_file.setdefault(p.file_path, []).append(i)
    rng = np.random.default_rng(seed)
    examples: list[TrainingExample] = []
    for thm in theorems:
        for tac in thm.traced_tactics:
            for name in tac.referenced_premises:
                pos = corpus.premise_by_name(name)
                if pos is None:
                    continue
                in_file = [
                    i for i in by_file.get(pos.file_path, ())
                    if pool[i].key != pos.key
                ]
                chosen: list[int] = []
                if in_file:
                    chosen.append(int(rng.choice(np.asarray(in_file))))
                rest = [
                    i for i in range(len(pool))
                    if pool[i].key != pos.key and i not in chosen
                ]
                need = NEGATIVES_PER_EXAMPLE - len(chosen)
                if len(rest) < need:
                    continue
                picked = rng.choice(np.asarray(rest), size=need, replace=False)
                chosen.extend(int(i) for i in picked)
                examples.append(TrainingExample(
                    state=tac.state_before,
                    positive=pos,
                    negatives=tuple(pool[i] for i in chosen),
                ))
    return examples


# -- embedding index ------------------------------------------------------------

@dataclass
class EmbeddingIndex:
    """Premise embeddings frozen at one model version."""

    version_hash: str
    keys: tuple[str, ...]
    matrix: np.ndarray  # (len(keys), dim)
    row_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.row_of = {k: i for i, k in enumerate(self.keys)}

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "version_hash": self.version_hash,
            "dim": int(self.matrix.shape[1]),
            "entries": {k: self.matrix[i].tolist() for i, k in enumerate(self.keys)},
        }

    @classmethod
    def from_json(cls, doc: object) -> EmbeddingIndex:
        if not isinstance(doc, dict) or "entries" not in doc or "version_hash" not in doc:
            raise CorruptDocument("index document needs version_hash and entries")
        entries = doc["entries"]
        if not isinstance(entries, dict):
            raise CorruptDocument("index entries must be an object")
        keys = tuple(sorted(entries))
        dim = int(doc.get("dim", 0))
        matrix = np.array([entries[k] for k in keys], dtype=np.float64)
        if keys and dim and matrix.shape[1] != dim:
            raise CorruptDocument("index entry width disagrees with declared dim")
        return cls(version_hash=str(doc["version_hash"]), keys=keys, matrix=matrix)

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(
                json.dumps(self.to_json(), sort_keys=True) + "\n", encoding="utf-8"
            )
        except OSError as e:
            raise IoFailure(f"cannot write index to {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> EmbeddingIndex:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read index from {path}: {e}") from e
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise CorruptDocument(f"index is not valid JSON: {e.msg}") from e


def precompute_embeddings(model: EmbeddingModel, corpus: Corpus) -> EmbeddingIndex:
    premises = corpus.all_premises()
    keyed = sorted(premises, key=lambda p: p.key)
    matrix = model.embed_many([p.text for p in keyed])
    return EmbeddingIndex(
        version_hash=model.version_hash,
        keys=tuple(p.key for p in keyed),
        matrix=matrix,
    )


# -- evaluation -------------------------------------------------------------------

EvalPair = tuple[str, frozenset[str]]


def extract_eval_pairs(theorems: list[Theorem], corpus: Corpus) -> list[EvalPair]:
    """(state, ground-truth premise keys) for every annotated tactic."""
    pairs: list[EvalPair] = []
    for thm in theorems:
        for tac in thm.traced_tactics:
            keys = frozenset(
                p.key
                for name in tac.referenced_premises
                if (p := corpus.premise_by_name(name)) is not None
            )
            if keys:
                pairs.append((tac.state_before, keys))
    return pairs


def _ranked_keys(model: EmbeddingModel, index: EmbeddingIndex, state: str) -> list[str]:
    sims = index.matrix @ model.embed(state)
    order = sorted(range(len(index.keys)), key=lambda i: (-sims[i], index.keys[i]))
    return [index.keys[i] for i in order]


def recall_at_k(
    model: EmbeddingModel,
    index: EmbeddingIndex,
    eval_pairs: list[EvalPair],
    k: int = 10,
) -> float:
    """Mean fraction of ground-truth premises found in the top k.

    Similarity ties break by ascending premise key.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if model.version_hash != index.version_hash:
        raise StaleIndex(
            f"index built at {index.version_hash}, model is {model.version_hash}"
        )
    if not eval_pairs:
        raise EmptyGroundTruth("no evaluation pairs")
    total = 0.0
    for state, gt in eval_pairs:
        if not gt:
            raise EmptyGroundTruth(f"empty ground truth for state {state!r}")
        top = _ranked_keys(model, index, state)[:k]
        total += len(gt.intersection(top)) / len(gt)
    return total / len(eval_pairs)


# -- training -----------------------------------------------------------------------

@dataclass
class RetrievalTask:
    """Everything one training round needs from a generated dataset."""

    name: str
    corpus: Corpus
    train_examples: list[TrainingExample]
    val_pairs: list[EvalPair]
    test_pairs: list[EvalPair]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    warmup_steps: int = 1000
    batch_size: int = 16
    clip_norm: float = 1.0
    eval_every: int | None = None  # None: four evaluations per epoch
    seed: int = 0
    ewc: EwcTerm | None = None


@dataclass
class Checkpoint:
    model: EmbeddingModel
    history: tuple[str, ...] = ()
    best_val_r10: float | None = None
    fisher: np.ndarray | None = None
    anchor: np.ndarray | None = None

    def ewc_term(self, lam: float) -> EwcTerm | None:
        """Penalty anchoring the next task to this checkpoint, if armed."""
        if lam <= 0.0 or self.fisher is None:
            return None
        anchor = self.anchor if self.anchor is not None else self.model.flat()
        return EwcTerm(lam=lam, fisher=self.fisher, anchor=anchor)

    def to_json(self) -> dict:
        return {
            "format_version": 1,
            "dim": self.model.dim,
            "n_features": self.model.n_features,
            "theta": self.model.flat().tolist(),
            "history": list(self.history),
            "best_val_r10": self.best_val_r10,
            "fisher": self.fisher.tolist() if self.fisher is not None else None,
            "anchor": self.anchor.tolist() if self.anchor is not None else None,
        }

    @classmethod
    def from_json(cls, doc: object) -> Checkpoint:
        if not isinstance(doc, dict):
            raise CorruptDocument("checkpoint must be a JSON object")
        try:
            dim = int(doc["dim"])
            n_features = int(doc["n_features"])
            theta = np.asarray(doc["theta"], dtype=np.float64)
            if theta.size != dim * n_features:
                raise CorruptDocument(
                    f"theta has {theta.size} entries, expected {dim * n_features}"
                )
            fisher = doc.get("fisher")
            anchor = doc.get("anchor")
            return cls(
                model=EmbeddingModel(weight=theta.reshape(dim, n_features)),
                history=tuple(doc.get("history", ())),
                best_val_r10=doc.get("best_val_r10"),
                fisher=np.asarray(fisher, dtype=np.float64) if fisher is not None else None,
                anchor=np.asarray(anchor, dtype=np.float64) if anchor is not None else None,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptDocument(f"bad checkpoint: {e}") from e

    def save(self, path: str | Path) -> None:
        try:
            Path(path).write_text(
                json.dumps(self.to_json(), sort_keys=True) + "\n", encoding="utf-8"
            )
        except OSError as e:
            raise IoFailure(f"cannot write checkpoint to {path}: {e}") from e

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise IoFailure(f"cannot read checkpoint from {path}: {e}") from e
        try:
            return cls.from_json(json.loads(text))
        except json.JSONDecodeError as e:
            raise CorruptDocument(f"checkpoint is not valid JSON: {e.msg}") from e


def lr_at(step: int, total_steps: int, warmup_steps: int, lr_max: float) -> float:
    """Linear warmup to lr_max, then cosine decay toward zero."""
    if warmup_steps > 0 and step < warmup_steps:
        return lr_max * (step + 1) / warmup_steps
    span = max(1, total_steps - warmup_steps)
    x = (step - warmup_steps) / span
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * x))


def train_one_epoch(
    checkpoint: Checkpoint,
    task: RetrievalTask,
    config: TrainConfig = TrainConfig(),
) -> Checkpoint:
    """One seeded pass over the task's examples.

    Returns the evaluated iterate with the highest validation recall@10;
    evaluations happen every eval_every steps and at epoch end.
    """
    if not task.train_examples:
        raise EmptyDataset(f"task {task.name!r} has no training examples")
    if not task.val_pairs:
        raise EmptyDataset(f"task {task.name!r} has no validation pairs")
    if config.ewc is not None:
        config.ewc.check(checkpoint.model.weight.size)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(task.train_examples))
    examples = [task.train_examples[i] for i in order]
    batches = [
        examples[lo:lo + config.batch_size]
        for lo in range(0, len(examples), config.batch_size)
    ]
    total = len(batches)
    eval_every = config.eval_every or max(1, total // 4)

    weight = checkpoint.model.weight.copy()
    best_weight = None
    best_recall = -1.0
    for step, batch in enumerate(batches):
        model = EmbeddingModel(weight=weight)
        _, grad = batch_loss_and_grad(model, batch, ewc=config.ewc)
        norm = float(np.linalg.norm(grad))
        if config.clip_norm > 0.0 and norm > config.clip_norm:
            grad = grad * (config.clip_norm / norm)
        weight = weight - lr_at(step, total, config.warmup_steps, config.lr) * grad
        if (step + 1) % eval_every == 0 or step == total - 1:
            candidate = EmbeddingModel(weight=weight.copy())
            index = precompute_embeddings(candidate, task.corpus)
            recall = recall_at_k(candidate, index, task.val_pairs, k=10)
            if recall > best_recall:
                best_recall = recall
                best_weight = candidate.weight
    assert best_weight is not None
    return Checkpoint(
        model=EmbeddingModel(weight=best_weight),
        history=checkpoint.history + (task.name,),
        best_val_r10=best_recall,
    )


def average_test_recall(
    model: EmbeddingModel, tasks: list[RetrievalTask], k: int = 10
) -> float:
    """Unweighted mean recall@k over every task's test pairs."""
    if not tasks:
        raise NoDatasets("no tasks to evaluate")
    recalls = []
    for task in tasks:
        index = precompute_embeddings(model, task.corpus)
        recalls.append(recall_at_k(model, index, task.test_pairs, k=k))
    return float(np.mean(recalls))
