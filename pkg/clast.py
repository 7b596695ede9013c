"""
CLAST - Pipeline Orchestrator

Ties the dataset, the two training stages, evaluation, correlation analysis,
gradient checks, loss ablations and the fusion benchmark together behind one
object configured by `Settings`. Every artifact of a run lands under the run
directory:

    config.resolved, losses_stage1.csv, losses.csv, eval.json,
    correlation.csv, gradcheck.json, ablation.json, bench.json,
    checkpoints/, images/
"""

import json
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from rich.table import Table

from bench import BenchConfig, BenchResult, run_benchmark, save_results, speed_ratios
from errors import ConfigurationError
from losses import (
    ABLATION_PRESETS,
    ContrastiveBatch,
    LossWeights,
    content_loss,
    directional_clip_loss,
    style_gram_loss,
    supcon_loss,
)
from model import Checkpoint, FusionStack, FusionTag, SsmParams, StyleNet, bidirectional_scan, ssm_scan, stylize
from settings import Settings, console
from styleset import (
    DatasetConfig,
    ImageRole,
    ImageSample,
    ProjectionMatrix,
    StyleDataset,
    StyleRef,
    build_from_config,
    describe,
    encode_images,
    load_dataset,
    load_png,
    save_png,
)
from tensor import RngStream, Tensor, l2_normalize, no_grad
from tensor.gradcheck import TENSOR_CASES, CaseBuilder, GradCheckResult, run_case, weighted_sum
from training import (
    CorrelationResult,
    EvalReport,
    TrainConfig,
    TrainResult,
    correlation_matrix,
    evaluate,
    load_classifier,
    restore_network,
    train_deception_classifier,
    train_stage1,
    train_stage2,
)


# ----------------------------------------------------------------------
# Gradient cases for the model-level operations
# ----------------------------------------------------------------------

def _leaf(rng: RngStream, *shape: int, low: Optional[float] = None, high: Optional[float] = None) -> Tensor:
    if low is not None:
        return Tensor(rng.uniform(low, high, shape))
    return Tensor(rng.normal(shape))


def _ssm_case(direction: Optional[str]) -> CaseBuilder:
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        params = SsmParams(3, 2, rng.split(0))
        params.delta_proj.bias.data += 0.5
        x = _leaf(rng.split(1), 5, 3)
        if direction is None:
            return (lambda xs: project(bidirectional_scan(xs[0], params))), [x, params.a_log]
        return (lambda xs: project(ssm_scan(xs[0], params, direction))), [x, params.a_log]
    return build


def _fusion_case(tag: FusionTag) -> CaseBuilder:
    """Full fusion block with perturbed weights (zero gates would hide the mixer)."""
    def build(rng: RngStream):
        project = weighted_sum(rng.split(99))
        stack = FusionStack(tag, channels=4, state_size=2, embed_dim=3, depth=1, rng=rng.split(0))
        for i, p in enumerate(stack.parameters()):
            p.data = p.data + 0.2 * rng.split(1, i).normal(p.shape)
        x = _leaf(rng.split(2), 1, 4, 2, 3)
        z = _leaf(rng.split(3), 1, 3)
        weight = stack.blocks[0].mixer.parameters()[0]
        return (lambda xs: project(stack(xs[0], xs[1]))), [x, z, weight]
    return build


def _descriptor_case(rng: RngStream):
    project = weighted_sum(rng.split(99))
    return (lambda xs: project(describe(xs[0]))), [_leaf(rng, 1, 3, 4, 4, low=0.1, high=0.9)]


def _encode_case(rng: RngStream):
    project = weighted_sum(rng.split(99))
    codebook = ProjectionMatrix.create(6, rng.split(0))
    return (lambda xs: project(encode_images(xs[0], codebook))), [_leaf(rng.split(1), 2, 3, 4, 4, low=0.1, high=0.9)]


def _supcon_case(rng: RngStream):
    labels = np.array([0, 0, 1, 1, 2, 2])
    return (lambda xs: supcon_loss(ContrastiveBatch(l2_normalize(xs[0], axis=-1), labels, 0.5))), [_leaf(rng, 6, 5)]


def _directional_case(rng: RngStream):
    z_content = l2_normalize(_leaf(rng.split(0), 3, 6), axis=-1)
    t_target = l2_normalize(_leaf(rng.split(1), 3, 6), axis=-1)
    t_null = l2_normalize(_leaf(rng.split(2), 6), axis=-1)
    return (
        lambda xs: directional_clip_loss(l2_normalize(xs[0], axis=-1), z_content, t_target, t_null)
    ), [_leaf(rng.split(3), 3, 6)]


def _gram_case(rng: RngStream):
    style = _leaf(rng.split(0), 1, 3, 4, 4)
    return (lambda xs: style_gram_loss([xs[0]], [style])), [_leaf(rng.split(1), 2, 3, 4, 4)]


def gradient_cases() -> Dict[str, CaseBuilder]:
    """Every differentiable operation, plus each fusion variant end to end."""
    cases = dict(TENSOR_CASES)
    cases.update({
        "ssm_scan_forward": _ssm_case("forward"),
        "ssm_scan_backward": _ssm_case("backward"),
        "bidirectional_scan": _ssm_case(None),
        "style_descriptor": _descriptor_case,
        "encode_image": _encode_case,
        "supcon_loss": _supcon_case,
        "directional_clip_loss": _directional_case,
        "style_gram_loss": _gram_case,
    })
    for tag in FusionTag:
        cases[f"fusion_{tag.value}"] = _fusion_case(tag)
    return cases


def run_gradcheck(
    names: Optional[Sequence[str]] = None,
    instances: int = 20,
    seed: int = 0,
    tolerance: float = 1e-4,
    verbose: bool = True,
) -> List[GradCheckResult]:
    """
    Central finite-difference check of every selected case.

    Raises:
        ConfigurationError: For an unknown case name
    """
    cases = gradient_cases()
    selected = list(names) if names else list(cases)
    unknown = [n for n in selected if n not in cases]
    if unknown:
        raise ConfigurationError(f"unknown gradient case(s): {', '.join(unknown)}")

    results = [run_case(name, cases[name], instances=instances, seed=seed, tolerance=tolerance) for name in selected]
    if verbose:
        table = Table(title=f"Gradient checks ({instances} instances, h=1e-5)")
        table.add_column("operation")
        table.add_column("max rel. error", justify="right")
        table.add_column("status")
        for r in results:
            table.add_row(r.name, f"{r.max_rel_error:.2e}", "[green]ok[/]" if r.passed else "[red]FAIL[/]")
        console.print(table)
    return results


# ----------------------------------------------------------------------
# Orchestrator
# ----------------------------------------------------------------------

class ClastExperiment:
    """
    One configured run.

    Sub-configurations (dataset, training stages, benchmark) are derived from
    the top-level `Settings`; the resolved settings are echoed into the run
    directory before anything else is written.
    """

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or Settings()
        self.run_dir = Path(self.settings.run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.settings.write_resolved(self.run_dir)
        self._dataset: Optional[StyleDataset] = None

    # Derived configs

    @property
    def config_hash(self) -> str:
        return self.settings.config_hash

    @property
    def checkpoint_dir(self) -> Path:
        return self.run_dir / "checkpoints"

    @property
    def stage1_path(self) -> Path:
        return self.checkpoint_dir / "stage1.json"

    @property
    def stage2_path(self) -> Path:
        return self.checkpoint_dir / "stage2.json"

    def dataset_config(self) -> DatasetConfig:
        s = self.settings
        return DatasetConfig(
            num_classes=s.num_classes,
            paintings_per_class=s.paintings_per_class,
            num_contents=s.num_contents,
            image_size=s.image_size,
            seed=s.seed,
            embed_dim=s.embed_dim,
            hue_bandwidth=s.hue_bandwidth,
            holdout_fraction=s.holdout_fraction,
            workers=s.effective_workers(),
        )

    def loss_weights(self) -> LossWeights:
        s = self.settings
        return LossWeights(
            lambda_clip=s.lambda_clip,
            lambda_supcon=s.lambda_supcon,
            lambda_sty=s.lambda_sty,
            lambda_con=s.lambda_con,
            lambda_lpips=s.lambda_lpips,
            lambda_unsup=s.lambda_unsup,
        )

    def train_config(self, stage: int, weights: Optional[LossWeights] = None, run_dir: Optional[Path] = None) -> TrainConfig:
        s = self.settings
        return TrainConfig(
            stage=stage,
            lr=s.stage1_lr if stage == 1 else s.lr,
            batch_size=s.batch_size,
            iterations=s.stage1_iterations if stage == 1 else s.stage2_iterations,
            seed=s.seed,
            weights=weights or self.loss_weights(),
            temperature=s.temperature,
            fusion_variant=s.fusion_variant,
            fusion_depth=s.fusion_depth,
            channels=s.channels,
            state_size=s.state_size,
            proj_dim=s.proj_dim,
            dataset_dir=s.dataset_dir,
            run_dir=str(run_dir or self.run_dir),
            checkpoint_every=s.checkpoint_every,
            log_every=s.log_every,
            verbose=s.verbose,
        )

    # Pipeline steps

    def build_dataset(self) -> StyleDataset:
        config = self.dataset_config()
        if self.settings.verbose:
            console.rule("Building dataset")
            console.print(
                f"C={config.num_classes} K={config.paintings_per_class} M={config.num_contents} "
                f"size={config.image_size} seed={config.seed}"
            )
        manifest = build_from_config(config, self.settings.dataset_dir)
        self._dataset = load_dataset(manifest)
        train_deception_classifier(
            self._dataset, steps=self.settings.classifier_steps, lr=self.settings.classifier_lr
        )
        if self.settings.verbose:
            report = manifest.calibration
            console.print(
                f"manifest {manifest.hash[:12]}  diagonal dominance {report['diagonal_dominance']:.3f}  "
                f"cosine gap {report['cosine_gap']:.3f}"
            )
        return self._dataset

    @property
    def dataset(self) -> StyleDataset:
        if self._dataset is None:
            self._dataset = load_dataset(self.settings.dataset_dir)
        return self._dataset

    def train(self, stage: int) -> TrainResult:
        if stage == 1:
            return train_stage1(self.train_config(1), self.dataset)
        if stage == 2:
            return train_stage2(self.train_config(2), self._require(self.stage1_path, "train --stage 1"), self.dataset)
        raise ConfigurationError(f"stage must be 1 or 2, got {stage}")

    def load_network(self) -> StyleNet:
        checkpoint = Checkpoint.load(self._require(self.stage2_path, "train --stage 2"))
        if checkpoint.header.manifest_hash and checkpoint.header.manifest_hash != self.dataset.manifest.hash:
            raise ConfigurationError("checkpoint was trained on a different dataset (manifest hash mismatch)")
        return restore_network(checkpoint)

    def evaluate(self, net: Optional[StyleNet] = None, run_dir: Optional[Path] = None) -> EvalReport:
        net = net or self.load_network()
        run_dir = Path(run_dir or self.run_dir)
        classifier = load_classifier(self.dataset)
        if self.settings.verbose:
            console.rule(f"Evaluating {net.tag.value}")
        report = evaluate(net, self.dataset, classifier, self.config_hash, image_dir=run_dir / "images")
        report.save(run_dir)
        if self.settings.verbose:
            means = report.means
            console.print(
                f"s_cont {means['s_cont']:.4f}  s_style {means['s_style']:.4f}  SSIM {means['ssim']:.4f}  "
                f"deception {report.deception_rate:.3f}  reconstruction SSIM {report.reconstruction_ssim:.3f}"
            )
        return report

    def analyze_correlation(self) -> CorrelationResult:
        dataset = self.dataset
        result = correlation_matrix(dataset.paintings, [c.id for c in dataset.classes], dataset.embedder)
        result.to_csv(self.run_dir / "correlation.csv")
        if self.settings.verbose:
            console.print(f"row-argmax accuracy {result.accuracy:.3f} over {len(result.labels)} paintings")
        return result

    def stylize_file(self, content_png: Path, out_png: Path, text: Optional[str] = None,
                     style_png: Optional[Path] = None) -> ImageSample:
        """Stylize one PNG with either a class label or a style image."""
        if (text is None) == (style_png is None):
            raise ConfigurationError("stylize needs exactly one of --text or --style-image")
        content = ImageSample(load_png(content_png), role=ImageRole.CONTENT)
        if text is not None:
            style = StyleRef.text(text)
        else:
            style = StyleRef.from_image(ImageSample(load_png(style_png), role=ImageRole.PAINTING))
        out = stylize(content, style, self.load_network(), self.dataset.embedder)
        save_png(out.pixels, out_png)
        return out

    def benchmark(self) -> List[BenchResult]:
        config = BenchConfig.from_settings(self.settings)
        results = run_benchmark(config, verbose=self.settings.verbose)
        save_results(results, self.run_dir / "bench.json", config.float_width)
        if self.settings.verbose:
            for length, ratio in speed_ratios(results).items():
                console.print(f"  attn_adain / ssm_adaln at L={length}: {ratio:.2f}x")
        return results

    def gradcheck(self, names: Optional[Sequence[str]] = None, instances: int = 20) -> List[GradCheckResult]:
        results = run_gradcheck(names, instances=instances, seed=self.settings.seed, verbose=self.settings.verbose)
        with open(self.run_dir / "gradcheck.json", "w") as f:
            json.dump({r.name: {**asdict(r), "passed": r.passed} for r in results}, f, indent=2)
        return results

    def ablate(self, presets: Sequence[str] = ("baseline", "clip", "clip_supcon")) -> Dict[str, Dict[str, float]]:
        """
        Train stage 2 once per loss preset from the same stage-1 checkpoint and
        seed, evaluate each, and write ablation.json.
        """
        unknown = [p for p in presets if p not in ABLATION_PRESETS]
        if unknown:
            raise ConfigurationError(f"unknown ablation preset(s): {', '.join(unknown)}")
        stage1 = Checkpoint.load(self._require(self.stage1_path, "train --stage 1"))

        summary = {}
        for name in presets:
            run_dir = self.run_dir / "ablation" / name
            if self.settings.verbose:
                console.rule(f"Ablation: {name}")
            result = train_stage2(self.train_config(2, LossWeights.preset(name), run_dir), stage1, self.dataset)
            report = self.evaluate(result.net, run_dir)
            summary[name] = {
                **report.means,
                "content_loss": self._mean_content_loss(result.net),
                "deception_rate": report.deception_rate,
            }

        with open(self.run_dir / "ablation.json", "w") as f:
            json.dump({"config_hash": self.config_hash, "presets": summary}, f, indent=2)
        return summary

    # Helpers

    def _mean_content_loss(self, net: StyleNet) -> float:
        dataset = self.dataset
        contents = dataset.holdout_contents or dataset.contents
        values = []
        with no_grad():
            for content in contents:
                taps = net.encode(content.pixels)
                for style in dataset.classes:
                    out = stylize(content, StyleRef.text(style.id), net, dataset.embedder)
                    values.append(content_loss(net.encode(out.pixels), taps).item())
        return float(np.mean(values))

    @staticmethod
    def _require(path: Path, producer: str) -> Path:
        if not path.is_file():
            raise ConfigurationError(f"{path} not found; run `{producer}` first")
        return path


def run_pipeline(settings: Optional[Settings] = None) -> EvalReport:
    """
    Convenience function: build the dataset, train both stages and evaluate.
    """
    experiment = ClastExperiment(settings)
    experiment.build_dataset()
    experiment.train(1)
    experiment.train(2)
    return experiment.evaluate()
