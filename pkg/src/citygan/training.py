"""Adversarial training with the original GAN objective.

One discriminator update (real + fake losses summed) then one generator
update per step, Adam on both networks, periodic fixed-noise evaluation
grids and resumable binary checkpoints. All randomness flows from
TrainConfig.seed through dedicated generators, so identically seeded runs
are bit-reproducible and an interrupted run resumes exactly.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from . import checkpoint as container
from .data import AugmentConfig, DEFAULT_CROP_FRACTION, batch_iterator
from .imaging import assemble_grid, save_png
from .models import (
    NetworkConfig,
    Variant,
    build_discriminator,
    build_generator,
)

log = logging.getLogger(__name__)

EVAL_COLUMNS = 8
METRICS_FILENAME = "metrics.tsv"
DRIFT_FILENAME = "drift.tsv"


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    network: NetworkConfig
    total_steps: int
    learning_rate: float = 2e-4
    betas: tuple = (0.5, 0.999)
    batch_size: int = 64
    eval_every: int = 100
    checkpoint_every: int = 500
    seed: int = 0
    flip_probability: float = 0.5
    crop_fraction: float = DEFAULT_CROP_FRACTION

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1 or self.checkpoint_every < 1:
            raise ValueError("eval_every and checkpoint_every must be >= 1")
        if self.total_steps < 0:
            raise ValueError(f"total steps must be >= 0, got {self.total_steps}")


@dataclass(frozen=True)
class StepMetrics:
    step: int
    d_loss_real: float
    d_loss_fake: float
    g_loss: float
    d_real_mean: float
    d_fake_mean: float

    def as_line(self):
        values = (self.d_loss_real, self.d_loss_fake, self.g_loss,
                  self.d_real_mean, self.d_fake_mean)
        return "\t".join([str(self.step)] + [repr(v) for v in values])


@dataclass
class TrainState:
    config: TrainConfig
    classes: list
    generator: torch.nn.Module
    discriminator: torch.nn.Module
    opt_g: torch.optim.Optimizer
    opt_d: torch.optim.Optimizer
    train_rng: torch.Generator
    fixed_noise: torch.Tensor
    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    manifest_digest: str = ""
    loss_history: list = field(default_factory=list)


@dataclass(frozen=True)
class CheckpointRecord:
    format_version: int
    config: TrainConfig
    classes: tuple
    step: int
    manifest_digest: str
    path: str
    digest: str


def _derive_seeds(seed):
    seq = np.random.SeedSequence(entropy=seed & (2 ** 64 - 1))
    return [int(s) for s in seq.generate_state(4, np.uint64)]


def epoch_seed(seed, epoch):
    seq = np.random.SeedSequence(entropy=[seed & (2 ** 64 - 1), epoch])
    return int(seq.generate_state(1, np.uint64)[0])


def _make_adam(params, cfg):
    # foreach=False pins the single-tensor kernel so resumed runs stay
    # bitwise identical to uninterrupted ones
    return torch.optim.Adam(
        params, lr=cfg.learning_rate, betas=tuple(cfg.betas), foreach=False
    )


def init_train_state(cfg: TrainConfig, classes, manifest_digest="") -> TrainState:
    classes = list(classes)
    net = cfg.network
    if net.conditional and net.label_count != len(classes):
        raise ValueError(
            f"network expects {net.label_count} classes, dataset has {len(classes)}"
        )
    g_seed, d_seed, train_seed, eval_seed = _derive_seeds(cfg.seed)
    generator = build_generator(net, g_seed)
    discriminator = build_discriminator(net, d_seed)
    train_rng = torch.Generator().manual_seed(train_seed)
    eval_rng = torch.Generator().manual_seed(eval_seed)
    fixed_noise = torch.randn(EVAL_COLUMNS, net.noise_dim, generator=eval_rng)
    return TrainState(
        config=cfg,
        classes=classes,
        generator=generator,
        discriminator=discriminator,
        opt_g=_make_adam(generator.parameters(), cfg),
        opt_d=_make_adam(discriminator.parameters(), cfg),
        train_rng=train_rng,
        fixed_noise=fixed_noise,
        manifest_digest=manifest_digest,
    )


def train_step(state: TrainState, batch):
    """One discriminator update then one generator update on a batch.

    Real samples carry their dataset labels; fake samples draw labels
    uniformly over classes, fed to both networks. Raises TrainingDiverged
    on any non-finite loss before it can reach the weights.
    """
    cfg = state.config
    net = cfg.network
    generator, discriminator = state.generator, state.discriminator
    generator.train()
    discriminator.train()
    images, labels = batch.images, batch.labels
    n = images.shape[0]
    conditional = net.conditional and net.label_count > 0
    real_labels = labels if conditional else None

    noise = torch.randn(n, net.noise_dim, generator=state.train_rng)
    if conditional:
        drawn = torch.randint(net.label_count, (n,), generator=state.train_rng)
        fake_labels = F.one_hot(drawn, net.label_count).to(images.dtype)
    else:
        fake_labels = None

    state.opt_d.zero_grad(set_to_none=True)
    logits_real = discriminator.forward_logits(images, real_labels)
    loss_real = F.binary_cross_entropy_with_logits(logits_real, torch.ones_like(logits_real))
    fake = generator(noise, fake_labels)
    logits_fake = discriminator.forward_logits(fake.detach(), fake_labels)
    loss_fake = F.binary_cross_entropy_with_logits(logits_fake, torch.zeros_like(logits_fake))
    _check_finite(state.step + 1, d_loss_real=loss_real, d_loss_fake=loss_fake)
    (loss_real + loss_fake).backward()
    state.opt_d.step()

    state.opt_g.zero_grad(set_to_none=True)
    logits_again = discriminator.forward_logits(fake, fake_labels)
    loss_g = F.binary_cross_entropy_with_logits(logits_again, torch.ones_like(logits_again))
    _check_finite(state.step + 1, g_loss=loss_g)
    loss_g.backward()
    state.opt_g.step()

    state.step += 1
    metrics = StepMetrics(
        step=state.step,
        d_loss_real=loss_real.item(),
        d_loss_fake=loss_fake.item(),
        g_loss=loss_g.item(),
        d_real_mean=torch.sigmoid(logits_real).mean().item(),
        d_fake_mean=torch.sigmoid(logits_fake).mean().item(),
    )
    state.loss_history.append(metrics)
    return state, metrics


def _check_finite(step, **losses):
    bad = {name: value.detach().item() for name, value in losses.items()
           if not math.isfinite(value.detach().item())}
    if bad:
        detail = ", ".join(f"{k}={v}" for k, v in bad.items())
        raise TrainingDiverged(f"non-finite loss at step {step}: {detail}")


def eval_label_rows(label_count):
    """Uniform-average row followed by each one-hot class row."""
    rows = [np.full(label_count, 1.0 / label_count, dtype=np.float32)]
    for c in range(label_count):
        row = np.zeros(label_count, dtype=np.float32)
        row[c] = 1.0
        rows.append(row)
    return rows


def render_eval_grid(generator, fixed_noise, label_count):
    """Fixed-noise grid: K columns, rows = average label + each class.

    The plain variant renders a single unlabeled row. Returns an 8-bit RGB
    raster.
    """
    columns = fixed_noise.shape[0]
    was_training = generator.training
    generator.eval()
    rows = []
    with torch.no_grad():
        if generator.config.conditional and label_count >= 1:
            for row_label in eval_label_rows(label_count):
                labels = torch.from_numpy(np.tile(row_label, (columns, 1)))
                rows.append(generator(fixed_noise, labels).numpy())
        else:
            rows.append(generator(fixed_noise).numpy())
    generator.train(was_training)
    return assemble_grid(np.stack(rows))


def _config_to_meta(cfg: TrainConfig):
    meta = asdict(cfg)
    meta["network"]["variant"] = cfg.network.variant.value
    meta["betas"] = list(cfg.betas)
    return meta


def _config_from_meta(meta):
    network = NetworkConfig(
        variant=Variant(meta["network"]["variant"]),
        image_size=meta["network"]["image_size"],
        label_count=meta["network"]["label_count"],
        noise_dim=meta["network"]["noise_dim"],
        base_feature_maps=meta["network"]["base_feature_maps"],
    )
    kwargs = {k: v for k, v in meta.items() if k != "network"}
    kwargs["betas"] = tuple(kwargs["betas"])
    return TrainConfig(network=network, **kwargs)


def _optimizer_tensors(prefix, optimizer, params):
    tensors = {}
    for index, param in enumerate(params):
        st = optimizer.state.get(param)
        if not st:
            continue
        tensors[f"{prefix}.{index}.step"] = np.asarray(
            float(st["step"]), dtype=np.float64
        )
        tensors[f"{prefix}.{index}.exp_avg"] = st["exp_avg"].detach().numpy()
        tensors[f"{prefix}.{index}.exp_avg_sq"] = st["exp_avg_sq"].detach().numpy()
    return tensors


def _restore_optimizer(prefix, optimizer, params, tensors):
    for index, param in enumerate(params):
        key = f"{prefix}.{index}.step"
        if key not in tensors:
            continue
        optimizer.state[param] = {
            "step": torch.tensor(float(tensors[key])),
            "exp_avg": torch.from_numpy(tensors[f"{prefix}.{index}.exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(tensors[f"{prefix}.{index}.exp_avg_sq"].copy()),
        }


def _module_tensors(prefix, module):
    tensors = {}
    for name, param in module.named_parameters():
        tensors[f"{prefix}.param.{name}"] = param.detach().numpy()
    for name, buf in module.named_buffers():
        tensors[f"{prefix}.buffer.{name}"] = buf.detach().numpy()
    return tensors


def _restore_module(prefix, module, tensors):
    with torch.no_grad():
        for name, param in module.named_parameters():
            key = f"{prefix}.param.{name}"
            if key not in tensors:
                raise container.CheckpointError(f"checkpoint is missing tensor {key!r}")
            param.copy_(torch.from_numpy(tensors[key].copy()))
        for name, buf in module.named_buffers():
            key = f"{prefix}.buffer.{name}"
            if key not in tensors:
                raise container.CheckpointError(f"checkpoint is missing tensor {key!r}")
            buf.copy_(torch.from_numpy(tensors[key].copy()))


def save_checkpoint(state: TrainState, path) -> CheckpointRecord:
    """Persist the full training state; load_checkpoint reproduces forward
    outputs bit-identically and resumes training with identical RNG draws."""
    meta = {
        "train_config": _config_to_meta(state.config),
        "classes": list(state.classes),
        "step": state.step,
        "epoch": state.epoch,
        "batch_in_epoch": state.batch_in_epoch,
        "manifest_digest": state.manifest_digest,
    }
    tensors = {}
    tensors.update(_module_tensors("generator", state.generator))
    tensors.update(_module_tensors("discriminator", state.discriminator))
    tensors.update(_optimizer_tensors(
        "opt_g", state.opt_g, list(state.generator.parameters())))
    tensors.update(_optimizer_tensors(
        "opt_d", state.opt_d, list(state.discriminator.parameters())))
    tensors["rng.train"] = state.train_rng.get_state().numpy()
    tensors["eval.fixed_noise"] = state.fixed_noise.numpy()
    digest = container.write_container(path, meta, tensors)
    return CheckpointRecord(
        format_version=container.FORMAT_VERSION,
        config=state.config,
        classes=tuple(state.classes),
        step=state.step,
        manifest_digest=state.manifest_digest,
        path=str(path),
        digest=digest,
    )


def load_checkpoint(path) -> TrainState:
    """Rebuild a TrainState (networks, optimizers, RNG) from a checkpoint."""
    meta, tensors, _ = container.read_container(path)
    cfg = _config_from_meta(meta["train_config"])
    generator = build_generator(cfg.network, 0)
    discriminator = build_discriminator(cfg.network, 0)
    _restore_module("generator", generator, tensors)
    _restore_module("discriminator", discriminator, tensors)
    opt_g = _make_adam(generator.parameters(), cfg)
    opt_d = _make_adam(discriminator.parameters(), cfg)
    _restore_optimizer("opt_g", opt_g, list(generator.parameters()), tensors)
    _restore_optimizer("opt_d", opt_d, list(discriminator.parameters()), tensors)
    train_rng = torch.Generator()
    train_rng.set_state(torch.from_numpy(tensors["rng.train"].copy()))
    return TrainState(
        config=cfg,
        classes=list(meta["classes"]),
        generator=generator,
        discriminator=discriminator,
        opt_g=opt_g,
        opt_d=opt_d,
        train_rng=train_rng,
        fixed_noise=torch.from_numpy(tensors["eval.fixed_noise"].copy()),
        step=meta["step"],
        epoch=meta["epoch"],
        batch_in_epoch=meta["batch_in_epoch"],
        manifest_digest=meta["manifest_digest"],
    )


def run_training(cfg: TrainConfig, manifest, out_dir,
                 resume_from=None, stop_after_step=None) -> CheckpointRecord:
    """Train to cfg.total_steps, writing metrics, eval grids and checkpoints.

    out_dir receives metrics.tsv (one line per step), drift.tsv (mean
    absolute pixel change of the fixed grid between evaluations),
    grid_<step>.png every eval_every steps and ckpt_<step>.bin every
    checkpoint_every steps plus at the final step. Pass resume_from to
    continue from a checkpoint; pass stop_after_step to interrupt early at
    a step boundary (the result then resumes exactly).
    """
    if not manifest.samples:
        raise ValueError("manifest has no samples")
    manifest.validate(check_paths=True)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        state = load_checkpoint(resume_from)
        if state.config.network != cfg.network:
            raise ValueError(
                f"checkpoint network {state.config.network} does not match requested {cfg.network}"
            )
        digest = manifest.digest()
        if state.manifest_digest and state.manifest_digest != digest:
            raise ValueError(
                "checkpoint was trained on a different manifest "
                f"({state.manifest_digest[:12]}.. vs {digest[:12]}..)"
            )
        state.config = cfg
    else:
        state = init_train_state(cfg, manifest.classes, manifest.digest())

    target = cfg.total_steps if stop_after_step is None else min(cfg.total_steps, stop_after_step)
    augment = AugmentConfig(
        target_size=cfg.network.image_size,
        flip_probability=cfg.flip_probability,
        crop_fraction=cfg.crop_fraction,
        seed=cfg.seed,
    )
    label_count = len(state.classes)
    last_grid = None
    last_saved = None
    record = None

    with open(out / METRICS_FILENAME, "a", encoding="utf-8") as metrics_file, \
            open(out / DRIFT_FILENAME, "a", encoding="utf-8") as drift_file:
        while state.step < target:
            stream = batch_iterator(
                manifest, augment, cfg.batch_size,
                epoch_seed(cfg.seed, state.epoch), start_batch=state.batch_in_epoch,
            )
            for batch in stream:
                state, metrics = train_step(state, batch)
                state.batch_in_epoch += 1
                metrics_file.write(metrics.as_line() + "\n")
                if state.step % cfg.eval_every == 0:
                    grid = render_eval_grid(state.generator, state.fixed_noise, label_count)
                    save_png(grid, out / f"grid_{state.step}.png")
                    if last_grid is not None and last_grid.shape == grid.shape:
                        drift = float(np.mean(np.abs(
                            grid.astype(np.float32) - last_grid.astype(np.float32))))
                        drift_file.write(f"{state.step}\t{drift!r}\n")
                    last_grid = grid
                if state.step % cfg.checkpoint_every == 0:
                    record = save_checkpoint(state, out / f"ckpt_{state.step}.bin")
                    last_saved = state.step
                if state.step >= target:
                    break
            if stream.skipped:
                log.warning("epoch %d: skipped %d undecodable samples",
                            state.epoch, stream.skipped)
            if state.step < target:
                state.epoch += 1
                state.batch_in_epoch = 0

    if last_saved != state.step:
        record = save_checkpoint(state, out / f"ckpt_{state.step}.bin")
    log.info("training finished at step %d; final checkpoint %s", state.step, record.path)
    return record
