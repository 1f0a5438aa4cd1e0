"""Beta-VAE models built on the neural core: specs, training, encode/decode."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import __version__
from .elements import ElectronConfiguration, ElementTable, ORBITALS
from .features import (
    GRID_CAPACITY,
    FeatureMatrix,
    Recipe,
    featurize_configs,
    grid_to_config,
)
from .nn import (
    History,
    NetworkSpec,
    OptimizerSpec,
    TrainConfig,
    backward,
    conv2d,
    conv2d_transpose,
    dense,
    flatten,
    forward,
    init_parameters,
    init_state,
    kl_standard_normal,
    load_checkpoint,
    loss_bce,
    optimizer_step,
    predict,
    reshape,
    save_checkpoint,
    split_indices,
)
from .nn.training import check_finite, minibatches

log = logging.getLogger(__name__)

LATENT_DIM = 2
KERNEL = (5, 2)


class RecipeMismatch(ValueError):
    """Features were not built with the recipe the model was trained on."""


@dataclass(frozen=True)
class BvaeSpec:
    """Encoder ends in a linear 4-unit layer read as (mu1, mu2, logvar1, logvar2)."""

    encoder: NetworkSpec
    decoder: NetworkSpec
    latent_dim: int = LATENT_DIM

    def __post_init__(self):
        if self.encoder.output_shape != (2 * self.latent_dim,):
            raise ValueError("encoder must end in 2 * latent_dim units (mu, logvar heads)")
        if self.decoder.input_shape != (self.latent_dim,):
            raise ValueError("decoder input must be the latent dimension")
        if self.decoder.output_shape != self.encoder.input_shape:
            raise ValueError("decoder output shape must mirror the encoder input")
        if self.decoder.layers[-1].activation != "sigmoid":
            raise ValueError("decoder must end in a sigmoid")


def conv_bvae_spec() -> BvaeSpec:
    encoder = NetworkSpec((7, 4, 1), (
        conv2d(256, KERNEL, activation="relu"),
        conv2d(32, KERNEL, activation="relu"),
        flatten(),
        dense(896, "relu"),
        dense(2 * LATENT_DIM),
    ))
    decoder = NetworkSpec((LATENT_DIM,), (
        dense(32, "relu"),
        dense(896, "relu"),
        reshape(7, 4, 32),
        conv2d_transpose(32, KERNEL, activation="relu"),
        conv2d_transpose(256, KERNEL, activation="relu"),
        conv2d_transpose(1, KERNEL, activation="sigmoid"),
    ))
    return BvaeSpec(encoder, decoder)


def dense_bvae_spec(input_dim: int, hidden=(256, 32)) -> BvaeSpec:
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    hidden = list(hidden)
    encoder = NetworkSpec((input_dim,), tuple(dense(h, "relu") for h in hidden)
                          + (dense(2 * LATENT_DIM),))
    decoder = NetworkSpec((LATENT_DIM,), tuple(dense(h, "relu") for h in reversed(hidden))
                          + (dense(input_dim, "sigmoid"),))
    return BvaeSpec(encoder, decoder)


# name -> (spec factory taking the feature width, default optimizer)
MODELS = {
    "conv": (lambda d: conv_bvae_spec(), "adam"),
    "dense7": (lambda d: dense_bvae_spec(d, (256, 32)), "rmsprop"),
    "dense118": (lambda d: dense_bvae_spec(d, (128, 16)), "rmsprop"),
    "dense5": (lambda d: dense_bvae_spec(d, (64, 16)), "rmsprop"),
    "dense11": (lambda d: dense_bvae_spec(d, (64, 16)), "rmsprop"),
}


# feature recipe each model is trained on unless overridden
DEFAULT_RECIPES = {
    "conv": Recipe(variant="image28", duplication=100),
    "dense7": Recipe(variant="shell7r", duplication=100),
    "dense118": Recipe(transposed=True, duplication=500),
    "dense5": Recipe(variant="valence4", period_encoding="normalized", duplication=100),
    "dense11": Recipe(variant="outer11", duplication=100),
}


def model_spec(name: str, input_dim: int) -> tuple[BvaeSpec, OptimizerSpec]:
    try:
        factory, algorithm = MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(MODELS)}") from None
    return factory(input_dim), OptimizerSpec(algorithm)


@dataclass
class TrainedBvae:
    spec: BvaeSpec
    encoder_params: list
    decoder_params: list
    config: TrainConfig
    optimizer: OptimizerSpec
    recipe: Recipe
    history: History = field(default_factory=History)
    name: str = "custom"

    def save(self, path, extra: dict | None = None):
        meta = dict(extra or {})
        meta.update(model=self.name, train_config=self.config.to_dict(),
                    optimizer=self.optimizer.to_dict(), recipe=self.recipe.to_dict(),
                    history=self.history.records, seed=self.config.seed, tool_version=__version__)
        save_checkpoint(
            path,
            {"encoder": (self.spec.encoder, self.encoder_params),
             "decoder": (self.spec.decoder, self.decoder_params)},
            meta,
        )

    @classmethod
    def load(cls, path) -> "TrainedBvae":
        nets, meta = load_checkpoint(path)
        (enc_spec, enc), (dec_spec, dec) = nets["encoder"], nets["decoder"]
        return cls(BvaeSpec(enc_spec, dec_spec), enc, dec,
                   TrainConfig(**meta["train_config"]), OptimizerSpec(**meta["optimizer"]),
                   Recipe.from_dict(meta["recipe"]), History(meta["history"]), meta["model"])


def _as_input(spec: BvaeSpec, rows: np.ndarray) -> np.ndarray:
    return np.asarray(rows, dtype=float).reshape((len(rows),) + spec.encoder.input_shape)


def _vae_step(spec, enc, dec, x, beta, rng):
    """One forward/backward pass; returns (recon, kl, encoder grads, decoder grads)."""
    enc_trace = forward(spec.encoder, enc, x, mode="train", seed=rng)
    h = enc_trace.output
    d = spec.latent_dim
    mu, logvar = h[:, :d], h[:, d:]
    eps = rng.standard_normal(mu.shape)
    std = np.exp(0.5 * logvar)
    z = mu + std * eps
    dec_trace = forward(spec.decoder, dec, z, mode="train", seed=rng)
    recon, dp = loss_bce(dec_trace.output, x)
    kl, dmu_kl, dlv_kl = kl_standard_normal(mu, logvar)
    dec_grads, dz = backward(spec.decoder, dec, dec_trace, dp)
    dh = np.hstack([dz + beta * dmu_kl, dz * eps * 0.5 * std + beta * dlv_kl])
    enc_grads, _ = backward(spec.encoder, enc, enc_trace, dh, input_grad=False)
    return recon, kl, enc_grads, dec_grads


def _evaluate(spec, enc, dec, x) -> tuple[float, float]:
    """Reconstruction (decoding the mean) and KL on held-out rows."""
    if len(x) == 0:
        return float("nan"), float("nan")
    h = predict(spec.encoder, enc, x)
    d = spec.latent_dim
    recon, _ = loss_bce(predict(spec.decoder, dec, h[:, :d]), x)
    kl, _, _ = kl_standard_normal(h[:, :d], h[:, d:])
    return recon, kl


def train_bvae(matrix: FeatureMatrix, spec: BvaeSpec, opt: OptimizerSpec,
               config: TrainConfig, name: str = "custom", progress=None) -> TrainedBvae:
    """Minimize BCE + beta * KL with reparameterized sampling.

    Rows are split ``config.split`` / rest at ``config.granularity``; the history
    keeps reconstruction and KL terms separately for train and test sides.
    ``progress``, if given, is called as ``progress(epoch, record)``.
    """
    if matrix.rows.min() < 0 or matrix.rows.max() > 1:
        raise ValueError("feature matrix entries must lie in [0, 1]")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    enc = init_parameters(spec.encoder, seeds[0])
    dec = init_parameters(spec.decoder, seeds[1])
    rng = np.random.default_rng(seeds[2])
    train_idx, test_idx = split_indices(matrix.row_labels, config.split, config.seed,
                                        config.granularity)
    x_all = _as_input(spec, matrix.rows)
    x_train, x_test = x_all[train_idx], x_all[test_idx]
    params = enc + dec
    state = init_state(params)
    history = History()
    for epoch in range(config.epochs):
        sums = np.zeros(2)
        for idx in minibatches(len(x_train), config.batch_size, rng):
            recon, kl, g_enc, g_dec = _vae_step(spec, enc, dec, x_train[idx], config.beta, rng)
            check_finite(recon + config.beta * kl, "beta-VAE loss", epoch)
            optimizer_step(opt, state, params, g_enc + g_dec)
            sums += np.array([recon, kl]) * len(idx)
        recon, kl = sums / max(len(x_train), 1)
        t_recon, t_kl = _evaluate(spec, enc, dec, x_test)
        history.append(epoch=epoch, train_recon=recon, train_kl=kl,
                       train_loss=recon + config.beta * kl, test_recon=t_recon,
                       test_kl=t_kl, test_loss=t_recon + config.beta * t_kl)
        log.info("epoch %d recon %.4f kl %.4f test %.4f", epoch, recon, kl, t_recon)
        if progress is not None:
            progress(epoch, history.records[-1])
    return TrainedBvae(spec, enc, dec, config, opt, matrix.recipe, history, name)


def _check_recipe(model: TrainedBvae, recipe: Recipe):
    def key(r: Recipe):
        return replace(r, duplication=1, noise=replace(r.noise, alpha=0.0, seed=0))

    if key(recipe) != key(model.recipe):
        raise RecipeMismatch(f"features built with {recipe} but model expects {model.recipe}")


def encode(model: TrainedBvae, features) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic encoding; returns (mu, logvar), each (n, latent_dim).

    ``features`` is a FeatureMatrix (its recipe is checked) or a raw array of rows
    already built with the model's recipe.
    """
    if isinstance(features, FeatureMatrix):
        _check_recipe(model, features.recipe)
        features = features.rows
    rows = np.atleast_2d(np.asarray(features, dtype=float))
    h = predict(model.spec.encoder, model.encoder_params, _as_input(model.spec, rows))
    d = model.spec.latent_dim
    return h[:, :d], h[:, d:]


def encode_configs(model: TrainedBvae, configs) -> tuple[np.ndarray, np.ndarray]:
    return encode(model, featurize_configs(list(configs), model.recipe))


def encode_table(model: TrainedBvae, table: ElementTable) -> tuple[np.ndarray, np.ndarray]:
    return encode_configs(model, [rec.config for rec in table])


def decode(model: TrainedBvae, z) -> np.ndarray:
    """Decoder output for latent points ``z`` (shape (2,) or (n, 2)), flattened per row."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    out = predict(model.spec.decoder, model.decoder_params, np.atleast_2d(z))
    out = out.reshape(len(out), -1)
    return out[0] if single else out


def round_counts(values: np.ndarray) -> np.ndarray:
    """Nearest integer, ties to even."""
    return np.rint(values)


def denormalize(model_or_recipe, decoded: np.ndarray) -> np.ndarray:
    recipe = model_or_recipe.recipe if isinstance(model_or_recipe, TrainedBvae) else model_or_recipe
    decoded = np.asarray(decoded, dtype=float)
    width = len(recipe.divisor)
    values = decoded[..., :width] * np.asarray(recipe.divisor)
    return values ** 2 if recipe.sqrt else values


def rounded_cells(recipe: Recipe, decoded: np.ndarray) -> np.ndarray:
    """Decoded rows -> rounded electron counts clamped to cell capacity."""
    counts = round_counts(denormalize(recipe, decoded))
    if recipe.variant == "image28":
        cap = GRID_CAPACITY.reshape(-1)
    elif recipe.variant == "orig19":
        cap = np.array([o.capacity for o in ORBITALS], dtype=float)
    else:
        raise ValueError(f"configurations cannot be rebuilt from {recipe.variant!r} features")
    return np.clip(counts, 0.0, cap)


def cells_to_config(recipe: Recipe, cells: np.ndarray) -> ElectronConfiguration:
    if recipe.variant == "image28":
        return grid_to_config(cells)
    return ElectronConfiguration(tuple(int(v) for v in cells))


def reconstruct_config(model: TrainedBvae, features) -> list[ElectronConfiguration]:
    """Encode, decode the mean, denormalize, round, clamp and rebuild configurations."""
    mu, _ = encode(model, features)
    cells = rounded_cells(model.recipe, decode(model, mu).reshape(len(mu), -1))
    return [cells_to_config(model.recipe, row) for row in cells]
