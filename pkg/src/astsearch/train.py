"""Contrastive training loop: schedule, optimizer, and the step driver.

The text side stays frozen (plain arrays from the provider); only the graph
encoder's parameters receive updates.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from astsearch.corpus import Sample
from astsearch.errors import ContractViolation, FormatError, TrainingDiverged
from astsearch.gnn import GnnModel, MlpAdapter
from astsearch.loss import clip_loss
from astsearch.pipeline import Pipeline, PipelineOptions
from astsearch.tensor import Tensor, stack_rows
from astsearch.graph import TypeVocabulary


@dataclass
class TrainConfig:
    batch_size: int = 64
    steps: int = 300
    lr: float = 0.004
    warmup_fraction: float = 0.10
    weight_decay: float = 0.01
    seed: int = 0
    pooling_method: str = "astgpool"
    pooling_ratio: float = 0.1
    depth: int = 3
    hidden: int | None = None
    eps: float = 0.5
    pool_after_last: bool = True
    no_node_type: bool = False
    undirected: bool = False
    mlp_adapter: bool = False

    def validate(self) -> None:
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ContractViolation(f"warmup_fraction must be in (0, 1), got {self.warmup_fraction}")
        if self.lr <= 0.0:
            raise ContractViolation(f"lr must be positive, got {self.lr}")
        if self.batch_size < 2:
            raise ContractViolation("batch_size must be at least 2")
        if self.steps < 1:
            raise ContractViolation("steps must be at least 1")
        if not 0.0 < self.pooling_ratio <= 1.0:
            raise ContractViolation(f"pooling_ratio must be in (0, 1], got {self.pooling_ratio}")
        if self.pooling_method not in ("astgpool", "topkpool", "sagpool"):
            raise ContractViolation(f"unknown pooling_method {self.pooling_method!r}")
        if self.depth < 1:
            raise ContractViolation(f"depth must be at least 1, got {self.depth}")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """JSON config; TOML accepted on Python 3.11+ (stdlib tomllib)."""
        path = Path(path)
        if path.suffix.lower() == ".toml":
            if sys.version_info < (3, 11):
                raise FormatError("TOML configs need Python 3.11+; use JSON")
            import tomllib

            data = tomllib.loads(path.read_text())
        else:
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise FormatError(f"config is not valid JSON: {exc}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise FormatError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, config: TrainConfig) -> float:
    """Linear warmup to lr, then cosine decay to zero at the final step."""
    warmup_steps = int(config.warmup_fraction * config.steps)
    if step < warmup_steps:
        return config.lr * step / warmup_steps
    if step >= config.steps:
        return 0.0
    denom = max(1, config.steps - 1 - warmup_steps)
    progress = (step - warmup_steps) / denom
    return config.lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Decoupled weight decay Adam; decay is applied multiplicatively before
    the moment update and skipped for the balance/temperature/beta scalars."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, params: list[tuple[str, Tensor]], weight_decay: float = 0.01):
        self.params = params
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params}
        self.v = {name: np.zeros_like(p.data) for name, p in params}

    @staticmethod
    def decays(name: str) -> bool:
        return name not in ("lambda", "tau") and ".beta" not in name

    def step(self, lr: float) -> None:
        self.t += 1
        bias1 = 1.0 - self.BETA1**self.t
        bias2 = 1.0 - self.BETA2**self.t
        for name, p in self.params:
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if self.weight_decay and self.decays(name):
                p.data = p.data * (1.0 - lr * self.weight_decay)
            m = self.m[name] = self.BETA1 * self.m[name] + (1.0 - self.BETA1) * grad
            v = self.v[name] = self.BETA2 * self.v[name] + (1.0 - self.BETA2) * grad * grad
            p.data = p.data - lr * (m / bias1) / (np.sqrt(v / bias2) + self.EPS)


@dataclass
class StepLog:
    step: int
    loss: float
    lr: float
    sigma_lambda: float
    tau: float


@dataclass
class TrainResult:
    model: object
    log: list[StepLog]
    pipeline: Pipeline
    graphs: list
    root_embeddings: list
    text_embeddings: np.ndarray
    sample_ids: list[str]


def write_metrics_csv(log: list[StepLog], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss,lr,sigma_lambda,tau\n")
        for row in log:
            fh.write(f"{row.step},{row.loss!r},{row.lr!r},{row.sigma_lambda!r},{row.tau!r}\n")


def prepare_pipeline(config: TrainConfig, samples: list[Sample], provider) -> Pipeline:
    vocab = TypeVocabulary.for_languages({s.language for s in samples})
    options = PipelineOptions(no_node_type=config.no_node_type, undirected=config.undirected)
    return Pipeline(vocab=vocab, provider=provider, options=options)


def build_model(config: TrainConfig, in_width: int, d_out: int):
    if config.mlp_adapter:
        return MlpAdapter(d_out=d_out, seed=config.seed)
    return GnnModel(
        in_width=in_width,
        d_out=d_out,
        hidden=config.hidden,
        depth=config.depth,
        eps=config.eps,
        ratio=config.pooling_ratio,
        pooling=config.pooling_method,
        pool_after_last=config.pool_after_last,
        seed=config.seed,
    )


def train(
    config: TrainConfig,
    samples: list[Sample],
    provider,
    model=None,
    text_provider=None,
    diagnostics_dir: str | Path | None = None,
) -> TrainResult:
    """Run the contrastive loop; returns the trained model plus the per-step log.

    `provider` embeds node contents and the root; `text_provider` (default:
    the same provider) embeds the docs. A non-finite loss aborts with a
    diagnostics dump.
    """
    config.validate()
    if len(samples) < config.batch_size:
        raise ContractViolation(
            f"corpus has {len(samples)} pairs but batch_size is {config.batch_size}"
        )
    text_provider = text_provider if text_provider is not None else provider
    pipeline = prepare_pipeline(config, samples, provider)

    graphs = []
    roots = []
    for s in samples:
        graph, root_emb = pipeline.encode_sample(s.code, s.language)
        graphs.append(graph)
        roots.append(root_emb)
    texts = np.stack([np.asarray(text_provider.embed_text(s.doc, key=s.id), dtype=np.float64) for s in samples])

    d_out = texts.shape[1]
    if roots and roots[0].shape[0] != d_out:
        raise ContractViolation(
            f"content embedding dim {roots[0].shape[0]} != text embedding dim {d_out}"
        )
    if model is None:
        model = build_model(config, pipeline.feature_width, d_out)

    optimizer = AdamW(model.parameters(), weight_decay=config.weight_decay)
    rng = np.random.default_rng(config.seed)
    log: list[StepLog] = []
    n = len(samples)
    for step in range(config.steps):
        batch_idx = rng.permutation(n)[: config.batch_size]
        outputs = [model.encode(graphs[i], roots[i]) for i in batch_idx]
        codes = stack_rows(outputs)
        tau = model.temperature()
        loss_t = clip_loss(codes, Tensor(texts[batch_idx]), tau)
        loss = loss_t.item()
        if not math.isfinite(loss):
            dump_path = _dump_diagnostics(diagnostics_dir, step, loss, model, config)
            raise TrainingDiverged(f"non-finite loss {loss} at step {step}", dump_path=dump_path)
        model.zero_grad()
        loss_t.backward()
        lr = lr_at(step, config)
        optimizer.step(lr)
        log.append(
            StepLog(
                step=step,
                loss=loss,
                lr=lr,
                sigma_lambda=float(model.balance().data),
                tau=float(model.temperature().data),
            )
        )
    return TrainResult(
        model=model,
        log=log,
        pipeline=pipeline,
        graphs=graphs,
        root_embeddings=roots,
        text_embeddings=texts,
        sample_ids=[s.id for s in samples],
    )


def _dump_diagnostics(diagnostics_dir, step: int, loss: float, model, config: TrainConfig) -> str:
    directory = Path(diagnostics_dir) if diagnostics_dir else Path.cwd()
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"train_diverged_step{step}.json"
    payload = {
        "step": step,
        "loss": repr(loss),
        "config": config.to_dict(),
        "param_norms": {
            name: float(np.linalg.norm(np.atleast_1d(p.data))) for name, p in model.parameters()
        },
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return str(path)
