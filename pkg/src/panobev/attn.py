"""Masked deformable attention over a panoramic feature map.

A set of BEV queries, each tied to a continuous 2D index into the feature
map, is first compacted by the occupancy mask (masked-out queries pass
through untouched). Each surviving query predicts, per head, a small set
of sampling offsets and softmax-normalized point weights from its own
embedding. The feature map is sampled bilinearly at index + offset with
horizontal wrap-around (the map is a panorama, so columns are cyclic) and
vertical clamping, projected per head, mixed by the point weights, summed
across heads through an output projection, and scattered back with an
optional residual.

Forward and backward passes are written out by hand in numpy; see
``gradient_check`` for the finite-difference harness that owns their
correctness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "FeatureMap",
    "BevQuery",
    "AttentionParams",
    "init_attention_params",
    "compact_by_mask",
    "predict_offsets_and_weights",
    "panoramic_bilinear_sample",
    "attention_forward",
    "attention_backward",
    "attention_stack_forward",
    "attention_stack_backward",
    "gradient_check",
]


@dataclass
class FeatureMap:
    """Dense feature raster of shape (height, width, channels)."""

    data: np.ndarray

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass
class BevQuery:
    """Flattened grid of BEV queries.

    ``data`` is (N, C_emb); ``index`` is (N, 2) continuous feature-space
    (row, col) coordinates, meaningful only where ``mask`` is true.
    """

    data: np.ndarray
    index: np.ndarray
    mask: np.ndarray


@dataclass
class AttentionParams:
    """Learnable tensors of one attention layer.

    The offset and weight heads are linear layers on the query embedding;
    ``w_value[i]`` projects a sampled feature vector into head i's
    subspace and ``w_out`` maps the concatenated heads back to the query
    width.
    """

    n_head: int
    n_point: int
    w_offset: np.ndarray  # (C_emb, n_head * n_point * 2)
    b_offset: np.ndarray  # (n_head * n_point * 2,)
    w_weight: np.ndarray  # (C_emb, n_head * n_point)
    b_weight: np.ndarray  # (n_head * n_point,)
    w_value: np.ndarray  # (n_head, C, C // n_head)
    w_out: np.ndarray  # (C, C_emb)
    residual: bool = True

    def tensors(self) -> dict[str, np.ndarray]:
        """Live references to the learnable arrays, keyed by name."""
        return {
            "w_offset": self.w_offset,
            "b_offset": self.b_offset,
            "w_weight": self.w_weight,
            "b_weight": self.b_weight,
            "w_value": self.w_value,
            "w_out": self.w_out,
        }


def init_attention_params(
    c_emb: int,
    c_feat: int,
    n_head: int,
    n_point: int,
    seed: int = 0,
    residual: bool = True,
    zero_heads: bool = True,
) -> AttentionParams:
    """Seeded initialization.

    With ``zero_heads`` (the default) the offset head starts at zero, so
    the first forward pass samples exactly at the reference index, and the
    weight head starts at zero, giving uniform point weights. Value and
    output projections always get small uniform random values. Set
    ``zero_heads=False`` to randomize every tensor (useful for gradient
    checking, where zero heads leave dead paths).
    """
    if c_feat % n_head != 0:
        raise ValueError(f"channels {c_feat} not divisible by {n_head} heads")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(c_feat)

    def head_init(shape):
        if zero_heads:
            return np.zeros(shape)
        return rng.uniform(-0.5, 0.5, size=shape)

    return AttentionParams(
        n_head=n_head,
        n_point=n_point,
        w_offset=head_init((c_emb, n_head * n_point * 2)),
        b_offset=head_init(n_head * n_point * 2),
        w_weight=head_init((c_emb, n_head * n_point)),
        b_weight=head_init(n_head * n_point),
        w_value=rng.uniform(-scale, scale, size=(n_head, c_feat, c_feat // n_head)),
        w_out=rng.uniform(-scale, scale, size=(c_feat, c_emb)),
        residual=residual,
    )


def compact_by_mask(query: BevQuery) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Drop masked-out queries.

    Returns (compact data (M, C_emb), compact indices (M, 2), kept row
    positions (M,)), where M is the number of true mask entries. Writing
    compact rows back at the kept positions restores the original layout.
    """
    kept = np.nonzero(np.asarray(query.mask, dtype=bool))[0]
    return query.data[kept].copy(), query.index[kept].copy(), kept


def _softmax_lastdim(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_offsets_and_weights(
    compact_q: np.ndarray, params: AttentionParams
) -> tuple[np.ndarray, np.ndarray]:
    """Per-query sampling offsets and normalized point weights.

    Offsets are unconstrained reals in feature-pixel units, shaped
    (M, n_head, n_point, 2); weights are softmax-normalized over the point
    axis, shaped (M, n_head, n_point).
    """
    m, c_emb = compact_q.shape
    if params.w_offset.shape[0] != c_emb:
        raise ValueError(
            f"query width {c_emb} does not match offset head input "
            f"{params.w_offset.shape[0]}"
        )
    nh, npnt = params.n_head, params.n_point
    offsets = (compact_q @ params.w_offset + params.b_offset).reshape(m, nh, npnt, 2)
    logits = (compact_q @ params.w_weight + params.b_weight).reshape(m, nh, npnt)
    return offsets, _softmax_lastdim(logits)


def _bilinear_prepare(height: int, width: int, locations: np.ndarray) -> dict:
    """Neighbor indices and interpolation factors for bilinear sampling.

    Rows clamp to [0, height-1]; columns wrap modulo width. ``row_gate``
    records where the row coordinate was inside the clamp range, i.e.
    where the output still responds to row perturbations.
    """
    loc = np.asarray(locations, dtype=np.float64)
    r = loc[:, 0]
    c = loc[:, 1]
    r_eff = np.clip(r, 0.0, height - 1.0)
    r0 = np.floor(r_eff)
    fr = r_eff - r0
    r0i = r0.astype(np.int64)
    r1i = np.minimum(r0i + 1, height - 1)
    c_eff = np.mod(c, width)
    c0 = np.floor(c_eff)
    fc = c_eff - c0
    c0i = c0.astype(np.int64) % width
    c1i = (c0i + 1) % width
    row_gate = (r > 0.0) & (r < height - 1.0)
    return {
        "r0": r0i,
        "r1": r1i,
        "c0": c0i,
        "c1": c1i,
        "fr": fr,
        "fc": fc,
        "row_gate": row_gate,
    }


def panoramic_bilinear_sample(feature: FeatureMap, locations: np.ndarray) -> np.ndarray:
    """Sample (K, 2) fractional (row, col) locations from a feature map.

    Bilinear interpolation with cyclic column wrap and row clamping;
    returns (K, C).
    """
    loc = np.asarray(locations, dtype=np.float64)
    if not np.all(np.isfinite(loc)):
        raise ValueError("sampling locations must be finite")
    p = _bilinear_prepare(feature.height, feature.width, loc)
    f = feature.data
    fr = p["fr"][:, None]
    fc = p["fc"][:, None]
    top = (1.0 - fc) * f[p["r0"], p["c0"]] + fc * f[p["r0"], p["c1"]]
    bot = (1.0 - fc) * f[p["r1"], p["c0"]] + fc * f[p["r1"], p["c1"]]
    return (1.0 - fr) * top + fr * bot


def _bilinear_backward(
    feature: FeatureMap, prep: dict, d_samples: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of bilinear sampling wrt the feature map and locations."""
    f = feature.data
    fr = prep["fr"][:, None]
    fc = prep["fc"][:, None]
    r0, r1, c0, c1 = prep["r0"], prep["r1"], prep["c0"], prep["c1"]

    d_feature = np.zeros_like(f)
    np.add.at(d_feature, (r0, c0), (1.0 - fr) * (1.0 - fc) * d_samples)
    np.add.at(d_feature, (r0, c1), (1.0 - fr) * fc * d_samples)
    np.add.at(d_feature, (r1, c0), fr * (1.0 - fc) * d_samples)
    np.add.at(d_feature, (r1, c1), fr * fc * d_samples)

    d_row_field = (1.0 - fc) * (f[r1, c0] - f[r0, c0]) + fc * (f[r1, c1] - f[r0, c1])
    d_col_field = (1.0 - fr) * (f[r0, c1] - f[r0, c0]) + fr * (f[r1, c1] - f[r1, c0])
    d_loc = np.empty((d_samples.shape[0], 2))
    d_loc[:, 0] = (d_samples * d_row_field).sum(axis=1) * prep["row_gate"]
    d_loc[:, 1] = (d_samples * d_col_field).sum(axis=1)
    return d_feature, d_loc


def _check_shapes(query: BevQuery, feature: FeatureMap, params: AttentionParams):
    n = query.data.shape[0]
    if query.index.shape != (n, 2):
        raise ValueError(f"index shape {query.index.shape} != ({n}, 2)")
    if query.mask.shape != (n,):
        raise ValueError(f"mask shape {query.mask.shape} != ({n},)")
    if params.w_value.shape[1] != feature.channels:
        raise ValueError(
            f"value projection expects {params.w_value.shape[1]} channels, "
            f"feature map has {feature.channels}"
        )
    if params.w_offset.shape[0] != query.data.shape[1]:
        raise ValueError("query embedding width does not match offset head")


def _forward_impl(query: BevQuery, feature: FeatureMap, params: AttentionParams):
    _check_shapes(query, feature, params)
    qc, pc, kept = compact_by_mask(query)
    m = kept.size
    nh, npnt = params.n_head, params.n_point
    out = query.data.copy()
    if m == 0:
        return BevQuery(data=out, index=query.index, mask=query.mask), None

    offsets, weights = predict_offsets_and_weights(qc, params)
    locations = (pc[:, None, None, :] + offsets).reshape(m * nh * npnt, 2)
    prep = _bilinear_prepare(feature.height, feature.width, locations)
    samples = panoramic_bilinear_sample(feature, locations).reshape(
        m, nh, npnt, feature.channels
    )
    values = np.einsum("mijc,icd->mijd", samples, params.w_value)
    heads = (weights[..., None] * values).sum(axis=2)  # (m, nh, dh)
    concat = heads.reshape(m, -1)
    mixed = concat @ params.w_out
    out[kept] = mixed + (qc if params.residual else 0.0)

    cache = {
        "qc": qc,
        "kept": kept,
        "weights": weights,
        "prep": prep,
        "samples": samples,
        "values": values,
        "concat": concat,
        "feature": feature,
        "params": params,
    }
    return BevQuery(data=out, index=query.index, mask=query.mask), cache


def attention_forward(
    query: BevQuery, feature: FeatureMap, params: AttentionParams
) -> BevQuery:
    """One attention layer. Masked-out query rows come back bit-identical."""
    updated, _ = _forward_impl(query, feature, params)
    return updated


def attention_backward(
    cache: dict | None, d_out: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray | None]:
    """Backward pass for one layer.

    ``d_out`` is the gradient at the layer output, (N, C_emb). Returns
    (parameter gradients keyed like AttentionParams.tensors(), gradient
    wrt the input query data, gradient wrt the feature map or None when
    every query was masked out).
    """
    if cache is None:
        # All-masked layer: output was a copy of the input.
        return {}, d_out.copy(), None
    params: AttentionParams = cache["params"]
    feature: FeatureMap = cache["feature"]
    qc = cache["qc"]
    kept = cache["kept"]
    weights = cache["weights"]
    samples = cache["samples"]
    values = cache["values"]
    m = kept.size
    nh, npnt = params.n_head, params.n_point

    d_query = d_out.copy()  # masked-out rows pass straight through
    go = d_out[kept]
    d_qc = go.copy() if params.residual else np.zeros_like(qc)

    d_w_out = cache["concat"].T @ go
    d_heads = (go @ params.w_out.T).reshape(m, nh, -1)
    d_weights = (d_heads[:, :, None, :] * values).sum(axis=3)
    d_values = weights[..., None] * d_heads[:, :, None, :]
    d_w_value = np.einsum("mijc,mijd->icd", samples, d_values)
    d_samples = np.einsum("mijd,icd->mijc", d_values, params.w_value)

    # Softmax backward over the point axis.
    dot = (d_weights * weights).sum(axis=-1, keepdims=True)
    d_logits = weights * (d_weights - dot)
    d_logits_flat = d_logits.reshape(m, nh * npnt)
    d_w_weight = qc.T @ d_logits_flat
    d_b_weight = d_logits_flat.sum(axis=0)
    d_qc += d_logits_flat @ params.w_weight.T

    d_feature, d_loc = _bilinear_backward(
        feature, cache["prep"], d_samples.reshape(m * nh * npnt, -1)
    )
    d_offsets = d_loc.reshape(m, nh * npnt * 2)
    d_w_offset = qc.T @ d_offsets
    d_b_offset = d_offsets.sum(axis=0)
    d_qc += d_offsets @ params.w_offset.T

    d_query[kept] = d_qc
    grads = {
        "w_offset": d_w_offset,
        "b_offset": d_b_offset,
        "w_weight": d_w_weight,
        "b_weight": d_b_weight,
        "w_value": d_w_value,
        "w_out": d_w_out,
    }
    return grads, d_query, d_feature


def attention_stack_forward(
    query: BevQuery, feature: FeatureMap, layers: Sequence[AttentionParams]
) -> BevQuery:
    """Apply a list of attention layers in sequence; [] is the identity."""
    out = query
    for params in layers:
        out = attention_forward(out, feature, params)
    return out


def attention_stack_forward_with_cache(
    query: BevQuery, feature: FeatureMap, layers: Sequence[AttentionParams]
):
    out = query
    caches = []
    for params in layers:
        out, cache = _forward_impl(out, feature, params)
        caches.append(cache)
    return out, caches


def attention_stack_backward(
    caches: list, d_out: np.ndarray, feature_shape: tuple[int, int, int]
) -> tuple[list[dict[str, np.ndarray]], np.ndarray, np.ndarray]:
    """Backward through a layer stack; returns per-layer grads in forward
    order, the query-data gradient, and the accumulated feature gradient."""
    d_feature_total = np.zeros(feature_shape)
    d_q = d_out
    grads_per_layer: list[dict[str, np.ndarray]] = []
    for cache in reversed(caches):
        grads, d_q, d_feature = attention_backward(cache, d_q)
        if d_feature is not None:
            d_feature_total += d_feature
        grads_per_layer.append(grads)
    grads_per_layer.reverse()
    return grads_per_layer, d_q, d_feature_total


def gradient_check(
    loss_and_grads: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    step: float,
) -> float:
    """Compare analytic gradients against central finite differences.

    ``loss_and_grads`` maps the parameter dict to (scalar loss, gradient
    dict with matching keys/shapes); the check perturbs every element of
    every tensor in place by +/- step and returns the worst relative
    error. Raises ValueError on a non-finite loss or step <= 0.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    loss0, grads = loss_and_grads(params)
    if not np.isfinite(loss0):
        raise ValueError("loss is not finite")
    worst = 0.0
    for name, tensor in params.items():
        analytic = grads[name]
        flat = tensor.reshape(-1)
        gflat = np.asarray(analytic).reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + step
            lp, _ = loss_and_grads(params)
            flat[k] = original - step
            lm, _ = loss_and_grads(params)
            flat[k] = original
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise ValueError("loss is not finite under perturbation")
            numeric = (lp - lm) / (2.0 * step)
            denom = max(abs(gflat[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[k] - numeric) / denom)
    return worst


def full_layer_gradient_check(
    c: int = 8,
    n: int = 16,
    n_head: int = 2,
    n_point: int = 4,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Finite-difference check of one full attention layer.

    Builds a random query/feature/parameter configuration (all heads
    randomized so no gradient path is dead, a partially false mask so the
    compaction branch is exercised) and checks a quadratic loss on the
    layer output against every parameter tensor. Returns the worst
    relative error.
    """
    rng = np.random.default_rng(seed)
    h_f, w_f = 5, 9
    feature = FeatureMap(rng.normal(size=(h_f, w_f, c)))
    mask = np.ones(n, dtype=bool)
    mask[rng.choice(n, size=max(1, n // 4), replace=False)] = False
    index = np.stack(
        [rng.uniform(0.3, h_f - 1.3, size=n), rng.uniform(0.0, w_f, size=n)], axis=-1
    )
    qdata = rng.normal(size=(n, c))
    params = init_attention_params(
        c, c, n_head, n_point, seed=seed + 1, residual=True, zero_heads=False
    )
    target = rng.normal(size=(n, c))

    def loss_and_grads(tensors):
        query = BevQuery(data=qdata, index=index, mask=mask)
        out, cache = _forward_impl(query, feature, params)
        diff = out.data - target
        loss = 0.5 * float((diff * diff).sum())
        grads, _, _ = attention_backward(cache, diff)
        return loss, grads

    return gradient_check(loss_and_grads, params.tensors(), step)
