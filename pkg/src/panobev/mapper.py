"""A small end-to-end panorama-to-BEV mapper.

The pipeline mirrors the intermediate-projection scheme at toy scale:

  1. a seeded patch encoder turns the RGB panorama into a feature map,
  2. the depth panorama builds the BEV occupancy mask and per-cell
     reference points,
  3. the reference points are projected back to panorama pixel indices
     and rescaled to feature resolution,
  4. a stack of masked deformable attention layers reads the feature map
     at those indices,
  5. a per-cell linear decoder emits class logits; never-observed cells
     keep a frozen logit vector that decodes to void.

Everything is plain float64 numpy with hand-written backprop, trained by
adaptive-moment gradient descent. Runs are bit-deterministic for a fixed
seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attn import (
    BevQuery,
    FeatureMap,
    attention_stack_backward,
    attention_stack_forward_with_cache,
    init_attention_params,
)
from .bev import (
    BevGrid,
    BevGridSpec,
    CameraPose,
    MaskMap,
    bev_reference_points,
    build_mask_map,
    invert_pose,
    transform_points,
)
from .checkpoint import load_tensors, save_tensors
from .geo import inverse_radial_projection, make_angle_grid

__all__ = [
    "ToyEncoderParams",
    "MapperModel",
    "TrainConfig",
    "init_encoder",
    "encode_panorama",
    "init_mapper_model",
    "forward",
    "train",
    "predict_map",
    "save_model",
    "load_model",
]


# ---------------------------------------------------------------------------
# Toy encoder


@dataclass
class ToyEncoderParams:
    """Patch embedding plus tanh channel-mixing layers."""

    patch: int
    embed_w: np.ndarray  # (patch * patch * 3, C)
    embed_b: np.ndarray  # (C,)
    mix: list  # [(w (C, C), b (C,)), ...]


def init_encoder(patch: int, channels: int, layers: int, seed: int) -> ToyEncoderParams:
    rng = np.random.default_rng(seed)
    d_in = patch * patch * 3
    scale = 1.0 / np.sqrt(d_in)
    embed_w = rng.uniform(-scale, scale, size=(d_in, channels))
    mix_scale = 1.0 / np.sqrt(channels)
    mix = [
        (
            rng.uniform(-mix_scale, mix_scale, size=(channels, channels)),
            np.zeros(channels),
        )
        for _ in range(layers)
    ]
    return ToyEncoderParams(patch=patch, embed_w=embed_w, embed_b=np.zeros(channels), mix=mix)


def _extract_patches(image: np.ndarray, patch: int) -> np.ndarray:
    h, w, _ = image.shape
    if h % patch or w % patch:
        raise ValueError(f"image {h}x{w} not divisible by patch size {patch}")
    hf, wf = h // patch, w // patch
    tiles = image.reshape(hf, patch, wf, patch, 3).transpose(0, 2, 1, 3, 4)
    return tiles.reshape(hf, wf, patch * patch * 3)


def _encode_from_patches(patches: np.ndarray, enc: ToyEncoderParams):
    x = patches @ enc.embed_w + enc.embed_b
    activations = [x]
    for w, b in enc.mix:
        x = np.tanh(x @ w + b)
        activations.append(x)
    return FeatureMap(x), {"patches": patches, "activations": activations}


def encode_panorama(image: np.ndarray, enc: ToyEncoderParams) -> FeatureMap:
    """Encode an (H, W, 3) image in [0, 1] into an (H/p, W/p, C) map."""
    patches = _extract_patches(np.asarray(image, dtype=np.float64), enc.patch)
    fmap, _ = _encode_from_patches(patches, enc)
    return fmap


def _encoder_backward(enc: ToyEncoderParams, cache: dict, d_feature: np.ndarray):
    activations = cache["activations"]
    d_x = d_feature
    d_mix = []
    for layer in range(len(enc.mix) - 1, -1, -1):
        w, _ = enc.mix[layer]
        out = activations[layer + 1]
        x_in = activations[layer]
        d_pre = d_x * (1.0 - out * out)  # tanh'
        flat_in = x_in.reshape(-1, x_in.shape[-1])
        flat_d = d_pre.reshape(-1, d_pre.shape[-1])
        d_mix.append((flat_in.T @ flat_d, flat_d.sum(axis=0)))
        d_x = d_pre @ w.T
    d_mix.reverse()
    flat_patches = cache["patches"].reshape(-1, cache["patches"].shape[-1])
    flat_d = d_x.reshape(-1, d_x.shape[-1])
    return {
        "embed_w": flat_patches.T @ flat_d,
        "embed_b": flat_d.sum(axis=0),
        "mix": d_mix,
    }


# ---------------------------------------------------------------------------
# Model


@dataclass
class MapperModel:
    encoder: ToyEncoderParams
    query_table: np.ndarray  # (S * S, C_emb) learnable positional queries
    attn_layers: list  # [AttentionParams, ...]
    decoder_w: np.ndarray  # (C_emb, K)
    decoder_b: np.ndarray  # (K,)
    spec: BevGridSpec
    num_classes: int
    pano_height: int
    pano_width: int
    unobserved_logits: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.unobserved_logits is None:
            # Frozen, not trained: decodes to the void label.
            vec = np.zeros(self.num_classes)
            vec[self.spec.void_label] = 1.0
            self.unobserved_logits = vec

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every trainable tensor."""
        out = {
            "encoder.embed_w": self.encoder.embed_w,
            "encoder.embed_b": self.encoder.embed_b,
            "query_table": self.query_table,
            "decoder.w": self.decoder_w,
            "decoder.b": self.decoder_b,
        }
        for i, (w, b) in enumerate(self.encoder.mix):
            out[f"encoder.mix{i}_w"] = w
            out[f"encoder.mix{i}_b"] = b
        for i, layer in enumerate(self.attn_layers):
            for name, tensor in layer.tensors().items():
                out[f"attn{i}.{name}"] = tensor
        return out


def init_mapper_model(
    pano_height: int,
    pano_width: int,
    spec: BevGridSpec,
    num_classes: int,
    patch: int = 4,
    channels: int = 16,
    encoder_layers: int = 1,
    attention_layers: int = 2,
    n_head: int = 4,
    n_point: int = 4,
    seed: int = 0,
) -> MapperModel:
    if pano_height % patch or pano_width % patch:
        raise ValueError("panorama dims must be divisible by the patch size")
    rng = np.random.default_rng(seed)
    encoder = init_encoder(patch, channels, encoder_layers, seed)
    layers = [
        init_attention_params(
            channels, channels, n_head, n_point, seed=seed + 1 + i, residual=True
        )
        for i in range(attention_layers)
    ]
    n = spec.size * spec.size
    query_table = rng.uniform(-0.1, 0.1, size=(n, channels))
    dec_scale = 1.0 / np.sqrt(channels)
    return MapperModel(
        encoder=encoder,
        query_table=query_table,
        attn_layers=layers,
        decoder_w=rng.uniform(-dec_scale, dec_scale, size=(channels, num_classes)),
        decoder_b=np.zeros(num_classes),
        spec=spec,
        num_classes=num_classes,
        pano_height=pano_height,
        pano_width=pano_width,
    )


def _query_geometry(model: MapperModel, depth: np.ndarray, pose: CameraPose):
    """Mask map plus feature-space reference indices; depends only on the
    depth/pose geometry, never on model weights."""
    grid = make_angle_grid(model.pano_height, model.pano_width)
    mask_map = build_mask_map(depth, grid, pose, model.spec)
    refs = bev_reference_points(mask_map)
    n = model.spec.size * model.spec.size
    index = np.zeros((n, 2), dtype=np.float64)
    mask = mask_map.mask.reshape(-1)
    if refs.shape[0]:
        cam_pts = transform_points(refs[:, 2:5], invert_pose(pose))
        pix = inverse_radial_projection(cam_pts, model.pano_height, model.pano_width)
        patch = model.encoder.patch
        scaled = pix.astype(np.float64) / patch  # h_f / H == w_f / W == 1 / patch
        linear = (refs[:, 0].astype(np.int64) * model.spec.size) + refs[
            :, 1
        ].astype(np.int64)
        index[linear] = scaled
    return mask_map, index, mask


def _forward_with_cache(model: MapperModel, geometry, patches: np.ndarray):
    mask_map, index, mask = geometry
    fmap, enc_cache = _encode_from_patches(patches, model.encoder)
    query = BevQuery(data=model.query_table, index=index, mask=mask)
    out_q, attn_caches = attention_stack_forward_with_cache(
        query, fmap, model.attn_layers
    )
    n, k = mask.size, model.num_classes
    logits = np.tile(model.unobserved_logits, (n, 1))
    logits[mask] = out_q.data[mask] @ model.decoder_w + model.decoder_b
    cache = {
        "enc_cache": enc_cache,
        "attn_caches": attn_caches,
        "out_q": out_q,
        "mask": mask,
        "fmap": fmap,
    }
    return logits.reshape(model.spec.size, model.spec.size, k), mask_map, cache


def forward(
    image: np.ndarray, depth: np.ndarray, pose: CameraPose, model: MapperModel
) -> tuple[np.ndarray, MaskMap]:
    """Run the pipeline; returns (S, S, K) logits and the mask map."""
    geometry = _query_geometry(model, np.asarray(depth, dtype=np.float64), pose)
    patches = _extract_patches(np.asarray(image, dtype=np.float64), model.encoder.patch)
    logits, mask_map, _ = _forward_with_cache(model, geometry, patches)
    return logits, mask_map


def predict_map(
    model: MapperModel, image: np.ndarray, depth: np.ndarray, pose: CameraPose
) -> BevGrid:
    """Argmax decode into a semantic BEV grid; unobserved cells are void."""
    logits, mask_map = forward(image, depth, pose, model)
    labels = np.argmax(logits, axis=-1).astype(np.int64)
    labels[~mask_map.mask] = model.spec.void_label
    return BevGrid(
        spec=model.spec,
        labels=labels,
        heights=np.where(mask_map.mask, mask_map.ref_heights, 0.0),
        observed=mask_map.mask.copy(),
    )


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    learning_rate: float = 3e-3
    epochs: int = 100
    batch_size: int = 1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValueError("invalid training configuration")


def _softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _scene_loss_and_grads(model: MapperModel, prepared: dict):
    """Cross-entropy over scored cells plus gradients for one scene."""
    logits, _, cache = _forward_with_cache(
        model, prepared["geometry"], prepared["patches"]
    )
    k = model.num_classes
    flat_logits = logits.reshape(-1, k)
    scored = prepared["scored"]
    targets = prepared["targets"]
    probs = _softmax_rows(flat_logits[scored])
    eps = 1e-12
    loss = float(-np.mean(np.log(probs[np.arange(targets.size), targets] + eps)))

    d_flat = np.zeros_like(flat_logits)
    d_scored = probs.copy()
    d_scored[np.arange(targets.size), targets] -= 1.0
    d_flat[scored] = d_scored / targets.size

    mask = cache["mask"]
    out_q = cache["out_q"]
    d_dec_w = out_q.data[mask].T @ d_flat[mask]
    d_dec_b = d_flat[mask].sum(axis=0)
    d_out_q = np.zeros_like(out_q.data)
    d_out_q[mask] = d_flat[mask] @ model.decoder_w.T

    attn_grads, d_query, d_feature = attention_stack_backward(
        cache["attn_caches"], d_out_q, cache["fmap"].data.shape
    )
    enc_grads = _encoder_backward(model.encoder, cache["enc_cache"], d_feature)

    grads = {
        "decoder.w": d_dec_w,
        "decoder.b": d_dec_b,
        "query_table": d_query,
        "encoder.embed_w": enc_grads["embed_w"],
        "encoder.embed_b": enc_grads["embed_b"],
    }
    for i, (dw, db) in enumerate(enc_grads["mix"]):
        grads[f"encoder.mix{i}_w"] = dw
        grads[f"encoder.mix{i}_b"] = db
    for i, layer_grads in enumerate(attn_grads):
        for name in model.attn_layers[i].tensors():
            grads[f"attn{i}.{name}"] = layer_grads.get(
                name, np.zeros_like(model.attn_layers[i].tensors()[name])
            )
    return loss, grads


def _prepare_scene(model: MapperModel, scene) -> dict:
    image, depth, pose, gt = scene
    if gt.spec.size != model.spec.size or gt.spec.range_m != model.spec.range_m:
        raise ValueError("scene ground truth grid does not match the model grid")
    geometry = _query_geometry(model, np.asarray(depth, dtype=np.float64), pose)
    mask = geometry[2]
    scored = mask & gt.observed.reshape(-1)
    return {
        "geometry": geometry,
        "patches": _extract_patches(
            np.asarray(image, dtype=np.float64), model.encoder.patch
        ),
        "scored": scored,
        "targets": gt.labels.reshape(-1)[scored].astype(np.int64),
    }


def train(
    scenes: list, model: MapperModel, config: TrainConfig
) -> tuple[MapperModel, list[float]]:
    """Optimize the model in place on (image, depth, pose, BevGrid) scenes.

    Returns the model and the per-epoch mean loss curve. Deterministic for
    a fixed config seed.
    """
    if not scenes:
        raise ValueError("need at least one scene")
    prepared = [_prepare_scene(model, s) for s in scenes]
    params = model.parameters()
    m_state = {k: np.zeros_like(v) for k, v in params.items()}
    v_state = {k: np.zeros_like(v) for k, v in params.items()}
    step = 0
    rng = np.random.default_rng(config.seed)
    losses: list[float] = []

    for _ in range(config.epochs):
        order = rng.permutation(len(prepared))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = {k: np.zeros_like(v) for k, v in params.items()}
            for idx in batch:
                loss, grads = _scene_loss_and_grads(model, prepared[idx])
                epoch_losses.append(loss)
                for k in acc:
                    acc[k] += grads[k]
            step += 1
            for k, p in params.items():
                g = acc[k] / batch.size
                m_state[k] = config.beta1 * m_state[k] + (1 - config.beta1) * g
                v_state[k] = config.beta2 * v_state[k] + (1 - config.beta2) * g * g
                m_hat = m_state[k] / (1 - config.beta1**step)
                v_hat = v_state[k] / (1 - config.beta2**step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
        losses.append(float(np.mean(epoch_losses)))
    return model, losses


# ---------------------------------------------------------------------------
# Checkpointing


def save_model(path, model: MapperModel) -> None:
    meta = {
        "patch": model.encoder.patch,
        "channels": model.query_table.shape[1],
        "encoder_layers": len(model.encoder.mix),
        "attention_layers": len(model.attn_layers),
        "n_head": model.attn_layers[0].n_head if model.attn_layers else 0,
        "n_point": model.attn_layers[0].n_point if model.attn_layers else 0,
        "residual": bool(model.attn_layers[0].residual) if model.attn_layers else True,
        "num_classes": model.num_classes,
        "pano_height": model.pano_height,
        "pano_width": model.pano_width,
        "grid": {
            "size": model.spec.size,
            "range_m": model.spec.range_m,
            "floor_cut": model.spec.floor_cut,
            "ceiling_cut": model.spec.ceiling_cut,
            "void_label": model.spec.void_label,
        },
    }
    save_tensors(path, model.parameters(), meta=meta)


def load_model(path) -> MapperModel:
    tensors, meta = load_tensors(path, with_meta=True)
    spec = BevGridSpec(**meta["grid"])
    model = init_mapper_model(
        meta["pano_height"],
        meta["pano_width"],
        spec,
        meta["num_classes"],
        patch=meta["patch"],
        channels=meta["channels"],
        encoder_layers=meta["encoder_layers"],
        attention_layers=meta["attention_layers"],
        n_head=meta["n_head"],
        n_point=meta["n_point"],
    )
    for layer in model.attn_layers:
        layer.residual = bool(meta.get("residual", True))
    for name, tensor in model.parameters().items():
        tensor[...] = tensors[name]
    return model
