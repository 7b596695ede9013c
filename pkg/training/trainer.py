"""
Two-stage training.

Stage 1 (reconstruction): encoder and decoder learn to reproduce content
images with the fusion stack bypassed, under L1 plus a feature distance
measured by a frozen randomly initialized encoder.

Stage 2 (style): the encoder is frozen. Each step draws a batch of content
images and style classes (at least two classes, at least two samples each),
produces a text-guided and an image-guided output through the same network,
and minimizes the weighted loss stack.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from errors import ConfigurationError, DivergenceError, NonFiniteError
from losses import (
    STAGE1_COLUMNS,
    STAGE2_COLUMNS,
    LossLog,
    LossWeights,
    ProjectionHead,
    content_loss,
    directional_clip_loss,
    perceptual_loss,
    style_gram_loss,
    supcon_total,
    total_loss,
    unsup_contrastive_loss,
)
from model import Checkpoint, CheckpointHeader, Encoder, Module, NetworkConfig, StyleNet
from settings import console
from styleset import NULL_CLASS_ID, StyleDataset, load_dataset
from tensor import RngStream, Tensor, no_grad
from training.optim import Adam


# substream keys under the run seed
_PERCEPTUAL_KEY, _HEAD_KEY, _STAGE1_KEY, _STAGE2_KEY = 7, 4, 10, 20

# two classes, two rows each
MIN_STYLE_BATCH = 4


@dataclass
class TrainConfig:
    """Configuration of one training stage."""
    stage: int = 2                          # 1 reconstruction, 2 style
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 4
    iterations: int = 500
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    temperature: float = 0.1

    # Network
    fusion_variant: str = "ssm_adaln"
    fusion_depth: int = 2
    channels: int = 64
    state_size: int = 8
    proj_dim: int = 128

    # Files
    dataset_dir: str = "./clast_output/dataset"
    run_dir: str = "./clast_output/run"
    checkpoint_every: int = 250             # 0 disables intermediate checkpoints
    log_every: int = 50
    verbose: bool = True

    def validate(self):
        if self.stage not in (1, 2):
            raise ConfigurationError(f"stage must be 1 or 2, got {self.stage}")
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1 or (self.stage == 2 and self.batch_size < MIN_STYLE_BATCH):
            raise ConfigurationError(
                f"batch_size {self.batch_size} is too small: the style stage needs two classes of two rows (>= {MIN_STYLE_BATCH})"
            )
        if self.temperature <= 0:
            raise ConfigurationError(f"temperature must be positive, got {self.temperature}")

    def network_config(self, embed_dim: int) -> NetworkConfig:
        return NetworkConfig(
            channels=self.channels,
            state_size=self.state_size,
            embed_dim=embed_dim,
            fusion_variant=self.fusion_variant,
            fusion_depth=self.fusion_depth,
            seed=self.seed,
        )

    @property
    def checkpoint_dir(self) -> Path:
        return Path(self.run_dir) / "checkpoints"


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    checkpoint_path: Path
    log: LossLog
    log_path: Path
    net: StyleNet
    head: Optional[ProjectionHead] = None


def _resolve_dataset(cfg: TrainConfig, dataset: Optional[StyleDataset]) -> StyleDataset:
    return dataset if dataset is not None else load_dataset(cfg.dataset_dir)


def _all_finite(modules: Dict[str, Module]) -> bool:
    return all(np.all(np.isfinite(p.data)) for m in modules.values() for p in m.parameters())


class _CheckpointKeeper:
    """Saves periodic checkpoints and remembers the last finite state."""

    def __init__(self, cfg: TrainConfig, name: str, header: CheckpointHeader, modules: Dict[str, Module]):
        self.cfg = cfg
        self.name = name
        self.header = header
        self.modules = modules
        self.last_finite = self.capture(0)

    def capture(self, step: int) -> Checkpoint:
        self.header.step = step
        return Checkpoint.capture(CheckpointHeader(**vars(self.header)), self.modules)

    def periodic(self, step: int):
        every = self.cfg.checkpoint_every
        if every > 0 and step % every == 0:
            self.last_finite = self.capture(step)
            self.last_finite.save(self.cfg.checkpoint_dir / f"{self.name}_step{step}.json")

    def diverged(self, step: int, cause: Exception) -> DivergenceError:
        if _all_finite(self.modules):
            self.last_finite = self.capture(step - 1)
        path = self.last_finite.save(self.cfg.checkpoint_dir / f"{self.name}_last_finite.json")
        return DivergenceError(
            f"{self.name} diverged at step {step}: {cause}; last finite checkpoint (step {self.last_finite.header.step}) saved",
            checkpoint_path=path,
            step=step,
        )

    def final(self, step: int) -> Tuple[Checkpoint, Path]:
        checkpoint = self.capture(step)
        return checkpoint, checkpoint.save(self.cfg.checkpoint_dir / f"{self.name}.json")


def _progress(cfg: TrainConfig, desc: str):
    return tqdm(range(1, cfg.iterations + 1), desc=desc, disable=not cfg.verbose, leave=False)


def _status(cfg: TrainConfig, step: int, values: Dict[str, float]):
    if cfg.verbose and cfg.log_every > 0 and (step % cfg.log_every == 0 or step == cfg.iterations):
        parts = "  ".join(f"{k}={v:.5f}" for k, v in values.items())
        console.print(f"  step {step:>5}/{cfg.iterations}  {parts}")


def _checked(name: str, value: Tensor) -> Tensor:
    if not np.all(np.isfinite(value.data)):
        raise NonFiniteError(f"loss term {name} is not finite")
    return value


def train_stage1(cfg: TrainConfig, dataset: Optional[StyleDataset] = None) -> TrainResult:
    """
    Reconstruction stage.

    Returns:
        TrainResult with the final checkpoint (encoder and decoder) and the loss log

    Raises:
        DivergenceError: If a loss becomes non-finite
    """
    cfg.validate()
    dataset = _resolve_dataset(cfg, dataset)
    net = StyleNet(cfg.network_config(dataset.codebook.dim))
    metric_encoder = Encoder(cfg.channels, RngStream(cfg.seed).split(_PERCEPTUAL_KEY))
    metric_encoder.freeze()

    images = np.stack([c.pixels for c in dataset.train_contents])
    rng = RngStream(cfg.seed).split(_STAGE1_KEY)
    optimizer = Adam(net.trainable_parameters(1), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    header = CheckpointHeader.for_network(net.config, dataset.manifest.hash, stage=1)
    modules = {"encoder": net.encoder, "decoder": net.decoder}
    keeper = _CheckpointKeeper(cfg, "stage1", header, modules)
    log = LossLog(STAGE1_COLUMNS)

    if cfg.verbose:
        console.rule("Stage 1: reconstruction")
        console.print(f"{len(images)} content images, {cfg.iterations} iterations, lr {cfg.lr}")

    for step in _progress(cfg, "stage 1"):
        pick = rng.split(step).choice(len(images), cfg.batch_size, replace=len(images) < cfg.batch_size)
        x = Tensor(images[pick])
        try:
            out = net(x)
            l_rec = _checked("L_rec", (out - x).abs().mean())
            l_lpips = _checked("L_lpips", perceptual_loss(out, x, metric_encoder))
            total = l_rec + l_lpips * cfg.weights.lambda_lpips
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            if not _all_finite(modules):
                raise NonFiniteError("parameters became non-finite")
        except NonFiniteError as exc:
            raise keeper.diverged(step, exc) from exc

        values = {"L_rec": l_rec.item(), "L_lpips": l_lpips.item(), "total": total.item()}
        log.append(step, values)
        _status(cfg, step, values)
        keeper.periodic(step)

    checkpoint, path = keeper.final(cfg.iterations)
    log_path = log.to_csv(Path(cfg.run_dir) / "losses_stage1.csv")
    return TrainResult(checkpoint=checkpoint, checkpoint_path=path, log=log, log_path=log_path, net=net)


def batch_labels(class_ids: List[int], batch_size: int, rng: RngStream) -> np.ndarray:
    """
    Class label per batch row, grouped: at least two classes with at least
    two rows each ([a, a, b, b] for a batch of 4).

    Raises:
        ConfigurationError: If the batch is below 4 rows or there are fewer than two classes
    """
    if batch_size < MIN_STYLE_BATCH or len(class_ids) < 2:
        raise ConfigurationError(
            f"cannot compose a batch of {batch_size} over {len(class_ids)} classes with two rows per class"
        )
    groups = max(2, min(len(class_ids), batch_size // 2))
    chosen = np.sort(rng.choice(np.asarray(class_ids), groups, replace=False))
    counts = np.full(groups, batch_size // groups)
    counts[:batch_size % groups] += 1
    return np.repeat(chosen, counts)


def restore_network(
    checkpoint: Checkpoint,
    fusion_variant: Optional[str] = None,
    fusion_depth: Optional[int] = None,
) -> StyleNet:
    """Network from a checkpoint; stage-1 checkpoints carry no fusion weights, so the fusion stays at init."""
    config = checkpoint.header.network_config()
    if fusion_variant is not None:
        config.fusion_variant = fusion_variant
    if fusion_depth is not None:
        config.fusion_depth = fusion_depth
    net = StyleNet(config)
    modules = {"encoder": net.encoder, "decoder": net.decoder}
    if checkpoint.state_for("fusion"):
        modules["fusion"] = net.fusion
    checkpoint.restore(modules)
    return net


def train_stage2(
    cfg: TrainConfig,
    stage1_ckpt: Union[Checkpoint, str, Path],
    dataset: Optional[StyleDataset] = None,
) -> TrainResult:
    """
    Style stage, starting from a stage-1 checkpoint.

    Raises:
        ConfigurationError: If the checkpoint was trained on a different dataset
        DivergenceError: If a loss becomes non-finite
    """
    cfg.validate()
    dataset = _resolve_dataset(cfg, dataset)
    stage1 = stage1_ckpt if isinstance(stage1_ckpt, Checkpoint) else Checkpoint.load(stage1_ckpt)
    if stage1.header.manifest_hash and stage1.header.manifest_hash != dataset.manifest.hash:
        raise ConfigurationError("stage-1 checkpoint was trained on a different dataset (manifest hash mismatch)")

    net = StyleNet(cfg.network_config(dataset.codebook.dim))
    stage1.restore({"encoder": net.encoder, "decoder": net.decoder})
    net.encoder.freeze()
    head = ProjectionHead(dataset.codebook.dim, cfg.proj_dim, RngStream(cfg.seed).split(_HEAD_KEY))
    embedder = dataset.embedder
    weights = cfg.weights

    contents = np.stack([c.pixels for c in dataset.train_contents])
    class_ids = [style.id for style in dataset.classes]
    t_null = embedder.anchors.vector(NULL_CLASS_ID)
    rng = RngStream(cfg.seed).split(_STAGE2_KEY)

    optimizer = Adam(net.trainable_parameters(2) + head.parameters(), lr=cfg.lr, betas=cfg.betas, eps=cfg.eps)
    header = CheckpointHeader.for_network(net.config, dataset.manifest.hash, stage=2)
    modules = {"encoder": net.encoder, "decoder": net.decoder, "fusion": net.fusion, "head": head}
    keeper = _CheckpointKeeper(cfg, "stage2", header, modules)
    log = LossLog(STAGE2_COLUMNS)

    if cfg.verbose:
        console.rule(f"Stage 2: style ({net.tag.value})")
        active = [name for name in ("L_clip", "L_supcon", "L_sty", "L_con", "L_lpips", "L_unsup") if weights.active(name)]
        console.print(f"{len(contents)} content images, {len(class_ids)} classes, terms: {', '.join(active) or 'none'}")

    for step in _progress(cfg, "stage 2"):
        draw = rng.split(step)
        labels = batch_labels(class_ids, cfg.batch_size, draw.split(0))
        pick = draw.split(1).choice(len(contents), cfg.batch_size, replace=len(contents) < cfg.batch_size)
        styles = np.stack([
            dataset.paintings_of(int(c))[int(draw.split(2, i).integers(0, len(dataset.paintings_of(int(c)))))].pixels
            for i, c in enumerate(labels)
        ])
        x = contents[pick]

        try:
            terms = _style_terms(net, head, embedder, weights, cfg.temperature, x, styles, labels, t_null)
            total = total_loss(terms, weights)
            optimizer.zero_grad()
            if total.requires_grad:
                total.backward()
                optimizer.step()
            if not _all_finite(modules):
                raise NonFiniteError("parameters became non-finite")
        except NonFiniteError as exc:
            raise keeper.diverged(step, exc) from exc

        values = {name: value.item() for name, value in terms.items()}
        values["total"] = total.item()
        log.append(step, values)
        _status(cfg, step, {k: values[k] for k in ("L_clip", "L_sty", "total") if k in values})
        keeper.periodic(step)

    checkpoint, path = keeper.final(cfg.iterations)
    log_path = log.to_csv(Path(cfg.run_dir) / "losses.csv")
    return TrainResult(checkpoint=checkpoint, checkpoint_path=path, log=log, log_path=log_path, net=net, head=head)


def _style_terms(
    net: StyleNet,
    head: ProjectionHead,
    embedder,
    weights: LossWeights,
    temperature: float,
    contents: np.ndarray,
    styles: np.ndarray,
    labels: np.ndarray,
    t_null: np.ndarray,
) -> Dict[str, Tensor]:
    """Active loss terms of one stage-2 batch; terms with zero weight are not computed."""
    with no_grad():
        encoded = net.encode(contents)
        style_taps = net.encode(styles)
        z_text = Tensor(embedder.anchors.matrix(labels))
        z_image = embedder.images(styles)
        z_content = embedder.images(contents)

    out_text = net.decode(net.fuse(encoded.features, z_text))
    out_image = net.decode(net.fuse(encoded.features, z_image))

    terms: Dict[str, Tensor] = {}
    needs_embeddings = weights.active("L_clip") or weights.active("L_supcon") or weights.active("L_unsup")
    if needs_embeddings:
        e_text = embedder.images(out_text)
        e_image = embedder.images(out_image)
    if weights.active("L_clip"):
        terms["L_clip"] = directional_clip_loss(e_text, z_content, z_text, t_null)
    if weights.active("L_supcon"):
        terms["L_supcon"] = supcon_total(e_image, e_text, z_image, labels, head, temperature)
    if weights.active("L_sty") or weights.active("L_con"):
        taps_image = net.encode(out_image)
        if weights.active("L_sty"):
            terms["L_sty"] = style_gram_loss(taps_image, style_taps)
        if weights.active("L_con"):
            terms["L_con"] = content_loss(taps_image, encoded) + content_loss(net.encode(out_text), encoded)
    if weights.active("L_lpips"):
        terms["L_lpips"] = perceptual_loss(out_image, contents, net.encoder) + perceptual_loss(out_text, contents, net.encoder)
    if weights.active("L_unsup"):
        terms["L_unsup"] = unsup_contrastive_loss((head(e_image), head(e_text)), temperature)
    return terms
