"""Desk-scale fully convolutional network with exact forward/backward passes.

Topology: three 3x3-conv + ReLU + 2x2-max-pool encoder stages (strides
1 -> 2 -> 4 -> 8), 1x1 score layers on the stride-4 and stride-8 features,
skip fusion (stride-8 score upsampled x2 and added to the stride-4 score),
then a fixed bilinear x4 upsample back to input resolution. The detection
head squashes to (0, 1) with a logistic; the density head clips at zero.

All upsampling is fixed bilinear (a constant linear operator), so its
backward pass is just the transposed matrix. Pooling caches its argmax and
routes gradients to the first maximum in raster order, which keeps the
backward pass deterministic.

Training runs in float32; gradient-check tests run the same code paths in
float64 by casting the parameter vector.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

FORMAT_VERSION = 1
_MAGIC = b"CWTR"

HEADS = ("detection", "density")


@dataclass(frozen=True)
class ArchConfig:
    """Architecture hyperparameters: input channels, stage widths, head."""

    in_channels: int = 3
    stage_channels: tuple[int, int, int] = (16, 32, 64)
    head: str = "detection"

    def __post_init__(self) -> None:
        if self.in_channels not in (1, 3):
            raise DataError(f"in_channels must be 1 or 3, got {self.in_channels}")
        if len(self.stage_channels) != 3 or any(c < 1 for c in self.stage_channels):
            raise DataError("stage_channels must be three positive ints")
        if self.head not in HEADS:
            raise DataError(f"head must be one of {HEADS}, got {self.head!r}")
        object.__setattr__(self, "stage_channels", tuple(int(c) for c in self.stage_channels))

    def param_slices(self) -> list[tuple[str, tuple[int, ...]]]:
        """Named parameter tensors in declaration (= serialization) order."""
        c1, c2, c3 = self.stage_channels
        return [
            ("conv1_w", (c1, self.in_channels, 3, 3)),
            ("conv1_b", (c1,)),
            ("conv2_w", (c2, c1, 3, 3)),
            ("conv2_b", (c2,)),
            ("conv3_w", (c3, c2, 3, 3)),
            ("conv3_b", (c3,)),
            ("score4_w", (1, c2, 1, 1)),
            ("score4_b", (1,)),
            ("score8_w", (1, c3, 1, 1)),
            ("score8_b", (1,)),
        ]

    def param_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.param_slices())


@dataclass
class ModelParams:
    """Flat parameter store with named per-layer slices."""

    arch: ArchConfig
    vector: np.ndarray
    version: int = FORMAT_VERSION
    _views: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        expected = self.arch.param_count()
        if self.vector.ndim != 1 or self.vector.size != expected:
            raise DataError(
                f"parameter vector has {self.vector.size} values, arch needs {expected}"
            )
        if not np.all(np.isfinite(self.vector)):
            raise DataError("parameter vector contains non-finite values")
        offset = 0
        views = {}
        for name, shape in self.arch.param_slices():
            size = int(np.prod(shape))
            views[name] = self.vector[offset : offset + size].reshape(shape)
            offset += size
        self._views = views

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.vector.copy(), self.version)


def init_params(
    arch: ArchConfig, seed: int, scheme: str = "xavier", dtype=np.float32
) -> ModelParams:
    """Xavier-uniform weights, zero biases, deterministic per seed.

    Each weight tensor is drawn uniform in +/- sqrt(6 / (fan_in + fan_out))
    with fan counts including the kernel footprint.
    """
    if scheme != "xavier":
        raise DataError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    chunks = []
    for name, shape in arch.param_slices():
        if name.endswith("_b"):
            chunks.append(np.zeros(shape, dtype=np.float64).ravel())
        else:
            out_ch, in_ch, kh, kw = shape
            fan_in = in_ch * kh * kw
            fan_out = out_ch * kh * kw
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            chunks.append(rng.uniform(-bound, bound, size=int(np.prod(shape))))
    vector = np.concatenate(chunks).astype(dtype)
    return ModelParams(arch, vector)


# ---------------------------------------------------------------------------
# primitive layers


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Extract 'same'-padded kh x kw windows: (B,C,H,W) -> (B,H,W,C*kh*kw)."""
    b, c, h, w = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    s = xp.strides
    win = np.lib.stride_tricks.as_strided(
        xp, (b, c, h, w, kh, kw), (s[0], s[1], s[2], s[3], s[2], s[3]), writeable=False
    )
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b, h, w, c * kh * kw)


def conv_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Stride-1 'same' convolution. Returns (out (B,Cout,H,W), cols cache)."""
    cout, _, kh, kw = weight.shape
    if kh == 1 and kw == 1:
        cols = x.transpose(0, 2, 3, 1)
        cols = np.ascontiguousarray(cols).reshape(x.shape[0], x.shape[2], x.shape[3], -1)
    else:
        cols = _im2col(x, kh, kw)
    out = cols @ weight.reshape(cout, -1).T + bias
    return out.transpose(0, 3, 1, 2), cols


def conv_backward(dout: np.ndarray, cols: np.ndarray, weight: np.ndarray, need_dx: bool = True):
    """Gradients of conv_forward. Returns (dx, dweight, dbias).

    dx is None when need_dx is False (the first layer has no upstream input
    gradient to propagate, and skipping it avoids the largest buffer).
    """
    cout, cin, kh, kw = weight.shape
    b, _, h, w = dout.shape
    dflat = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(-1, cout)
    dw = (dflat.T @ cols.reshape(-1, cols.shape[-1])).reshape(weight.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    if kh == 1 and kw == 1:
        dx = (dflat @ weight.reshape(cout, cin)).reshape(b, h, w, cin).transpose(0, 3, 1, 2)
        return np.ascontiguousarray(dx), dw, db
    # col2im: scatter each window's gradient back onto the padded input
    dcols = (dflat @ weight.reshape(cout, -1)).reshape(b, h, w, cin, kh, kw)
    ph, pw = kh // 2, kw // 2
    dxp = np.zeros((b, cin, h + 2 * ph, w + 2 * pw), dtype=dout.dtype)
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, :, ky : ky + h, kx : kx + w] += dcols[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
    return np.ascontiguousarray(dxp[:, :, ph : ph + h, pw : pw + w]), dw, db


def maxpool_forward(x: np.ndarray):
    """2x2 stride-2 max pool; caches the argmax (first max, raster order).

    Pools width first (adjacent pairs, cache friendly), then height. Strict
    comparisons keep the first maximum at each level, and because raster
    order is row-major the two-level first-max equals the flat first-max.
    """
    b, c, h, w = x.shape
    xw = x.reshape(b, c, h, w // 2, 2)
    left, right = xw[..., 0], xw[..., 1]
    right_wins = right > left
    wmax = np.where(right_wins, right, left)
    xh = wmax.reshape(b, c, h // 2, 2, w // 2)
    top, bot = xh[:, :, :, 0, :], xh[:, :, :, 1, :]
    bot_wins = bot > top
    out = np.where(bot_wins, bot, top)
    col = right_wins.reshape(b, c, h // 2, 2, w // 2)
    col_of_winner = np.where(bot_wins, col[:, :, :, 1, :], col[:, :, :, 0, :])
    arg = (2 * bot_wins + col_of_winner).astype(np.int8)
    return out, arg


def maxpool_backward(dout: np.ndarray, arg: np.ndarray) -> np.ndarray:
    """Route gradients back to the pooled argmax positions."""
    b, c, h2, w2 = dout.shape
    dx = np.zeros((b, c, h2 * 2, w2 * 2), dtype=dout.dtype)
    dx[:, :, 0::2, 0::2] = dout * (arg == 0)
    dx[:, :, 0::2, 1::2] = dout * (arg == 1)
    dx[:, :, 1::2, 0::2] = dout * (arg == 2)
    dx[:, :, 1::2, 1::2] = dout * (arg == 3)
    return dx


@lru_cache(maxsize=32)
def _interp_matrix(n_in: int, factor: int) -> np.ndarray:
    """Dense 1-D bilinear upsampling matrix (n_in*factor, n_in).

    Sample positions follow the half-pixel-center convention
    (src = (dst + 0.5)/factor - 0.5) with edge clamping, which keeps
    integer-factor translation covariance in the interior.
    """
    n_out = n_in * factor
    mat = np.zeros((n_out, n_in), dtype=np.float64)
    for o in range(n_out):
        src = (o + 0.5) / factor - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        t = src - i0
        mat[o, i0] += 1.0 - t
        mat[o, i1] += t
    return mat


def upsample_forward(x: np.ndarray, factor: int) -> np.ndarray:
    """Fixed bilinear upsample of (B,C,H,W) by an integer factor."""
    ur = _interp_matrix(x.shape[2], factor).astype(x.dtype)
    uc = _interp_matrix(x.shape[3], factor).astype(x.dtype)
    return np.matmul(np.matmul(ur, x), uc.T)


def upsample_backward(dout: np.ndarray, factor: int) -> np.ndarray:
    """Transpose of upsample_forward for the same input shape."""
    n_in_r = dout.shape[2] // factor
    n_in_c = dout.shape[3] // factor
    ur = _interp_matrix(n_in_r, factor).astype(dout.dtype)
    uc = _interp_matrix(n_in_c, factor).astype(dout.dtype)
    return np.matmul(np.matmul(ur.T, dout), uc)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# full network


def _batch_to_chw(batch: np.ndarray, arch: ArchConfig, dtype) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim != 4:
        raise DataError(f"batch must be (B, H, W, C), got shape {batch.shape}")
    if batch.shape[3] != arch.in_channels:
        raise DataError(
            f"batch has {batch.shape[3]} channels, arch expects {arch.in_channels}"
        )
    if batch.shape[1] % 8 != 0 or batch.shape[2] % 8 != 0:
        raise DataError(
            f"spatial dimensions must be divisible by 8, got {batch.shape[1]}x{batch.shape[2]}"
        )
    return np.ascontiguousarray(batch.transpose(0, 3, 1, 2), dtype=dtype)


def forward(params: ModelParams, batch: np.ndarray):
    """Run the network on a (B, H, W, C) batch in [0, 1].

    Returns (out, cache) where out is (B, H, W): probabilities in [0, 1]
    for the detection head, non-negative densities for the density head.
    The cache feeds backward() and is only valid for this exact call.
    """
    dtype = params.vector.dtype
    x = _batch_to_chw(batch, params.arch, dtype)

    z1, cols1 = conv_forward(x, params["conv1_w"], params["conv1_b"])
    a1 = np.maximum(z1, 0)
    p1, arg1 = maxpool_forward(a1)

    z2, cols2 = conv_forward(p1, params["conv2_w"], params["conv2_b"])
    a2 = np.maximum(z2, 0)
    p2, arg2 = maxpool_forward(a2)

    z3, cols3 = conv_forward(p2, params["conv3_w"], params["conv3_b"])
    a3 = np.maximum(z3, 0)
    p3, arg3 = maxpool_forward(a3)

    s4, cols_s4 = conv_forward(p2, params["score4_w"], params["score4_b"])
    s8, cols_s8 = conv_forward(p3, params["score8_w"], params["score8_b"])

    fused = upsample_forward(s8, 2) + s4
    pre = upsample_forward(fused, 4)[:, 0]

    if params.arch.head == "detection":
        out = _sigmoid(pre)
    else:
        out = np.maximum(pre, 0)

    cache = {
        "z1": z1, "arg1": arg1, "cols1": cols1,
        "z2": z2, "arg2": arg2, "cols2": cols2,
        "z3": z3, "arg3": arg3, "cols3": cols3,
        "cols_s4": cols_s4, "cols_s8": cols_s8,
        "pre": pre, "out": out,
        "batch_shape": batch.shape,
    }
    return out, cache


def backward(params: ModelParams, cache: dict, dout: np.ndarray) -> np.ndarray:
    """Exact reverse-mode gradient of the forward pass.

    Args:
        params: The parameters used in the matching forward call.
        cache: Cache returned by forward().
        dout: d loss / d output, shape (B, H, W).

    Returns:
        Gradient vector aligned with params.vector.
    """
    dtype = params.vector.dtype
    dout = np.asarray(dout, dtype=dtype)
    if dout.shape != cache["out"].shape:
        raise DataError(
            f"dout shape {dout.shape} does not match cached output {cache['out'].shape}"
        )

    if params.arch.head == "detection":
        out = cache["out"]
        dpre = dout * out * (1.0 - out)
    else:
        dpre = dout * (cache["pre"] > 0)

    dfused = upsample_backward(dpre[:, None, :, :], 4)
    ds8 = upsample_backward(dfused, 2)
    ds4 = dfused

    dp3, dw_s8, db_s8 = conv_backward(ds8, cache["cols_s8"], params["score8_w"])
    dp2_scores, dw_s4, db_s4 = conv_backward(ds4, cache["cols_s4"], params["score4_w"])

    da3 = maxpool_backward(dp3, cache["arg3"])
    dz3 = da3 * (cache["z3"] > 0)
    dp2_stage, dw3, db3 = conv_backward(dz3, cache["cols3"], params["conv3_w"])

    da2 = maxpool_backward(dp2_stage + dp2_scores, cache["arg2"])
    dz2 = da2 * (cache["z2"] > 0)
    dp1, dw2, db2 = conv_backward(dz2, cache["cols2"], params["conv2_w"])

    da1 = maxpool_backward(dp1, cache["arg1"])
    dz1 = da1 * (cache["z1"] > 0)
    _, dw1, db1 = conv_backward(dz1, cache["cols1"], params["conv1_w"], need_dx=False)

    grads = {
        "conv1_w": dw1, "conv1_b": db1,
        "conv2_w": dw2, "conv2_b": db2,
        "conv3_w": dw3, "conv3_b": db3,
        "score4_w": dw_s4, "score4_b": db_s4,
        "score8_w": dw_s8, "score8_b": db_s8,
    }
    return np.concatenate(
        [grads[name].ravel() for name, _ in params.arch.param_slices()]
    ).astype(dtype)


# ---------------------------------------------------------------------------
# serialization: magic "CWTR", u32 version, length-prefixed arch JSON,
# float32 LE parameter slices in declaration order


def save_params(params: ModelParams, path: str | Path) -> None:
    arch_blob = json.dumps(
        {
            "in_channels": params.arch.in_channels,
            "stage_channels": list(params.arch.stage_channels),
            "head": params.arch.head,
        },
        sort_keys=True,
    ).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<I", len(arch_blob)))
        f.write(arch_blob)
        f.write(params.vector.astype("<f4").tobytes())


def load_params(path: str | Path) -> ModelParams:
    blob = Path(path).read_bytes()
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a model file (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: model format version {version} not supported (expected {FORMAT_VERSION})"
        )
    arch_len = struct.unpack("<I", blob[8:12])[0]
    if len(blob) < 12 + arch_len:
        raise FormatError(f"{path}: truncated model file (arch header)")
    try:
        arch_dict = json.loads(blob[12 : 12 + arch_len].decode("utf-8"))
        arch = ArchConfig(
            in_channels=arch_dict["in_channels"],
            stage_channels=tuple(arch_dict["stage_channels"]),
            head=arch_dict["head"],
        )
    except (ValueError, KeyError) as exc:
        raise FormatError(f"{path}: unreadable arch header: {exc}") from exc
    payload = blob[12 + arch_len :]
    expected = arch.param_count() * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: parameter payload is {len(payload)} bytes, expected {expected}"
        )
    vector = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return ModelParams(arch, vector, version=version)
