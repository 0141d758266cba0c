"""Wavelet neural operator: lift, wavelet kernel integral layers, downlift.

Each kernel integral layer computes

    v  ->  phi( idwt( R . dwt(v) ) + W v + b )

where R applies learnable width x width channel mixing to the retained
wavelet sub-bands (by default the coarsest approximation band and the
coarsest detail band; finer bands are truncated in the kernel path), W is a
pointwise affine map, and phi is GeLU on all but the final layer.  Channel
mixing is shared across coefficients within a band, so the parameter count is
independent of the grid resolution.

The downlift output layer is zero-initialized: a freshly initialized model is
the exact zero correction, so an augmented solver starts bit-identical to the
known-physics solver.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import wavelet as wv
from .errors import FormatVersionMismatch, ShapeMismatch
from .rng import stream

CHECKPOINT_MAGIC = b"DPAW"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class WnoConfig:
    width: int = 64
    layers: int = 4
    wavelet: wv.WaveletSpec = field(default_factory=wv.WaveletSpec)
    fc1_dim: int = 128
    in_channels: int = 2
    out_channels: int = 1
    spatial_dims: int = 1
    bands: str = "coarsest"  # or "all"

    def __post_init__(self):
        if self.width < 1 or self.layers < 1 or self.fc1_dim < 1:
            raise ValueError("width, layers and fc1_dim must be >= 1")
        if self.spatial_dims not in (1, 2):
            raise ValueError("spatial_dims must be 1 or 2")
        if self.bands not in ("coarsest", "all"):
            raise ValueError("bands must be 'coarsest' or 'all'")

    def kernel_bands(self) -> tuple:
        """Names of the sub-bands that carry mixing weights, coarsest first."""
        levels = self.wavelet.levels if self.bands == "all" else 1
        names = ["approx"]
        if self.spatial_dims == 1:
            names += [f"detail{j}" for j in range(levels)]
        else:
            for j in range(levels):
                names += [f"lh{j}", f"hl{j}", f"hh{j}"]
        return tuple(names)

    def parameter_shapes(self) -> dict:
        w, f1 = self.width, self.fc1_dim
        shapes = {
            "lift.weight": (w, self.in_channels),
            "lift.bias": (w,),
        }
        for layer in range(self.layers):
            for band in self.kernel_bands():
                shapes[f"layer{layer}.kernel.{band}"] = (w, w)
            shapes[f"layer{layer}.pointwise.weight"] = (w, w)
            shapes[f"layer{layer}.pointwise.bias"] = (w,)
        shapes["downlift1.weight"] = (f1, w)
        shapes["downlift1.bias"] = (f1,)
        shapes["downlift2.weight"] = (self.out_channels, f1)
        shapes["downlift2.bias"] = (self.out_channels,)
        return shapes

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.parameter_shapes().values())


class WnoModel:
    """Parameter store for one network; values are float64 ndarrays."""

    def __init__(self, config: WnoConfig, params: dict):
        expected = config.parameter_shapes()
        if set(params) != set(expected):
            raise ShapeMismatch("parameter names do not match the configuration")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeMismatch(
                    f"parameter {name}: expected {shape}, got {params[name].shape}")
        self.config = config
        self.params = {name: np.asarray(params[name], dtype=np.float64)
                       for name in expected}

    @classmethod
    def initialize(cls, config: WnoConfig, seed: int) -> "WnoModel":
        """Glorot-uniform everywhere except the zero output layer."""
        rng = stream(seed, "init")
        params = {}
        for name, shape in config.parameter_shapes().items():
            if name.startswith("downlift2.") or name.endswith(".bias"):
                params[name] = np.zeros(shape)
            else:
                fan_out, fan_in = shape if len(shape) == 2 else (shape[0], shape[0])
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                params[name] = rng.uniform(-limit, limit, size=shape)
        return cls(config, params)

    def copy(self) -> "WnoModel":
        return WnoModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def save(self, path):
        save_checkpoint(self, path)

    @classmethod
    def load(cls, path) -> "WnoModel":
        return load_checkpoint(path)


# ---------------------------------------------------------------------------
# forward pass

def _channel_axis(x, spatial_dims):
    return ad.value_of(x).ndim - spatial_dims - 1


def grid_channels(grid, like_shape, spatial_dims):
    """Coordinate channels broadcast to the state's leading axes."""
    lead = like_shape[: len(like_shape) - spatial_dims - 1]
    if spatial_dims == 1:
        gx = np.asarray(grid, dtype=np.float64)
        return np.broadcast_to(gx, lead + (1,) + gx.shape).copy()
    x, y = grid
    ny, nx = len(y), len(x)
    gx = np.broadcast_to(np.asarray(x)[None, :], (ny, nx))
    gy = np.broadcast_to(np.asarray(y)[:, None], (ny, nx))
    g = np.stack([gx, gy])
    return np.broadcast_to(g, lead + (2, ny, nx)).copy()


def lift(u, grid, model: WnoModel, params=None):
    """Pointwise affine map of (state, coordinates) into the width channels."""
    p = params if params is not None else model.params
    cfg = model.config
    ca = _channel_axis(u, cfg.spatial_dims)
    shape = ad.value_of(u).shape
    state_channels = shape[ca]
    if state_channels + cfg.spatial_dims != cfg.in_channels:
        raise ShapeMismatch(
            f"state has {state_channels} channels; config expects "
            f"{cfg.in_channels - cfg.spatial_dims}")
    coords = grid_channels(grid, shape, cfg.spatial_dims)
    if coords.shape[-cfg.spatial_dims:] != shape[-cfg.spatial_dims:]:
        raise ShapeMismatch(
            f"grid {coords.shape[-cfg.spatial_dims:]} vs state "
            f"{shape[-cfg.spatial_dims:]}")
    x = ad.concat(u, coords, ca)
    v = ad.matmul(p["lift.weight"], x, channel_axis=ca)
    return ad.bias_add(v, p["lift.bias"], channel_axis=ca)


def _dwt_chain_1d(v, wspec):
    lengths = wv.level_lengths(ad.value_of(v).shape[-1], wspec)
    a = v
    details = []  # finest first during descent
    for m in lengths:
        lo, hi = wv.level_analysis(m, wspec.family, wspec.extension)
        details.append(ad.level_matmul("dwt_level", hi, a, -1))
        a = ad.level_matmul("dwt_level", lo, a, -1)
    return a, details, lengths


def _dwt_chain_2d(v, wspec):
    shapes = wv.level_shapes_2d(ad.value_of(v).shape[-2:], wspec)
    a = v
    details = []
    for ny, nx in shapes:
        lo_x, hi_x = wv.level_analysis(nx, wspec.family, wspec.extension)
        lo_y, hi_y = wv.level_analysis(ny, wspec.family, wspec.extension)
        l = ad.level_matmul("dwt_level", lo_x, a, -1)
        h = ad.level_matmul("dwt_level", hi_x, a, -1)
        ll = ad.level_matmul("dwt_level", lo_y, l, -2)
        lh = ad.level_matmul("dwt_level", hi_y, l, -2)
        hl = ad.level_matmul("dwt_level", lo_y, h, -2)
        hh = ad.level_matmul("dwt_level", hi_y, h, -2)
        details.append((lh, hl, hh))
        a = ll
    return a, details, shapes


def kernel_layer(v, layer: int, model: WnoModel, params=None, final=False):
    """One wavelet kernel integral block; `final` drops the activation."""
    p = params if params is not None else model.params
    cfg = model.config
    wspec = cfg.wavelet
    ca = _channel_axis(v, cfg.spatial_dims)

    def mix(band, value):
        return ad.matmul(p[f"layer{layer}.kernel.{band}"], value, channel_axis=ca)

    if cfg.spatial_dims == 1:
        a, details, lengths = _dwt_chain_1d(v, wspec)
        # bands not carrying weights are truncated from the kernel path
        mixed = {}
        for band in cfg.kernel_bands():
            if band == "approx":
                continue
            j = int(band[6:])  # 0 = coarsest
            mixed[len(lengths) - 1 - j] = mix(band, details[len(lengths) - 1 - j])
        x = mix("approx", a)
        for idx in range(len(lengths) - 1, -1, -1):
            m = lengths[idx]
            s_lo, s_hi = wv.level_synthesis(m, wspec.family, wspec.extension)
            x = ad.level_matmul("idwt_level", s_lo, x, -1)
            if idx in mixed:
                x = ad.add(x, ad.level_matmul("idwt_level", s_hi, mixed[idx], -1))
    else:
        a, details, shapes = _dwt_chain_2d(v, wspec)
        mixed = {}
        for band in cfg.kernel_bands():
            if band == "approx":
                continue
            kind, j = band[:2], int(band[2:])
            pos = {"lh": 0, "hl": 1, "hh": 2}[kind]
            key = (len(shapes) - 1 - j, pos)
            mixed[key] = mix(band, details[key[0]][pos])
        x = mix("approx", a)
        for idx in range(len(shapes) - 1, -1, -1):
            ny, nx = shapes[idx]
            s_lo_x, s_hi_x = wv.level_synthesis(nx, wspec.family, wspec.extension)
            s_lo_y, s_hi_y = wv.level_synthesis(ny, wspec.family, wspec.extension)
            l = ad.level_matmul("idwt_level", s_lo_y, x, -2)
            if (idx, 0) in mixed:
                l = ad.add(l, ad.level_matmul("idwt_level", s_hi_y, mixed[(idx, 0)], -2))
            x = ad.level_matmul("idwt_level", s_lo_x, l, -1)
            h = None
            if (idx, 1) in mixed:
                h = ad.level_matmul("idwt_level", s_lo_y, mixed[(idx, 1)], -2)
            if (idx, 2) in mixed:
                hh_up = ad.level_matmul("idwt_level", s_hi_y, mixed[(idx, 2)], -2)
                h = hh_up if h is None else ad.add(h, hh_up)
            if h is not None:
                x = ad.add(x, ad.level_matmul("idwt_level", s_hi_x, h, -1))

    w = ad.matmul(p[f"layer{layer}.pointwise.weight"], v, channel_axis=ca)
    w = ad.bias_add(w, p[f"layer{layer}.pointwise.bias"], channel_axis=ca)
    out = ad.add(x, w)
    return out if final else ad.gelu(out)


def downlift(v, model: WnoModel, params=None):
    p = params if params is not None else model.params
    ca = _channel_axis(v, model.config.spatial_dims)
    v = ad.matmul(p["downlift1.weight"], v, channel_axis=ca)
    v = ad.bias_add(v, p["downlift1.bias"], channel_axis=ca)
    v = ad.gelu(v)
    v = ad.matmul(p["downlift2.weight"], v, channel_axis=ca)
    return ad.bias_add(v, p["downlift2.bias"], channel_axis=ca)


def wno_forward(u, grid, model: WnoModel, params=None):
    """Correction field for state `u`; shaped like `u`, differentiable when
    `u` or any parameter is a Tensor."""
    v = lift(u, grid, model, params)
    last = model.config.layers - 1
    for layer in range(model.config.layers):
        v = kernel_layer(v, layer, model, params, final=(layer == last))
    return downlift(v, model, params)


# ---------------------------------------------------------------------------
# checkpoint format: magic, version, config header, named shape-tagged blocks

def _config_header(config: WnoConfig) -> bytes:
    doc = {
        "width": config.width,
        "layers": config.layers,
        "wavelet_family": config.wavelet.family,
        "wavelet_levels": config.wavelet.levels,
        "wavelet_extension": config.wavelet.extension,
        "fc1_dim": config.fc1_dim,
        "in_channels": config.in_channels,
        "out_channels": config.out_channels,
        "spatial_dims": config.spatial_dims,
        "bands": config.bands,
    }
    return json.dumps(doc, sort_keys=True).encode()


def config_from_header(doc: dict) -> WnoConfig:
    return WnoConfig(
        width=doc["width"],
        layers=doc["layers"],
        wavelet=wv.WaveletSpec(doc["wavelet_family"], doc["wavelet_levels"],
                               doc["wavelet_extension"]),
        fc1_dim=doc["fc1_dim"],
        in_channels=doc["in_channels"],
        out_channels=doc["out_channels"],
        spatial_dims=doc["spatial_dims"],
        bands=doc["bands"],
    )


def save_checkpoint(model: WnoModel, path):
    header = _config_header(model.config)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(model.params)))
        for name, value in model.params.items():
            raw = name.encode()
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<B", value.ndim))
            fh.write(struct.pack(f"<{value.ndim}Q", *value.shape))
            fh.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def load_checkpoint(path) -> WnoModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatVersionMismatch(f"not a checkpoint file: magic {magic!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version > CHECKPOINT_VERSION:
            raise FormatVersionMismatch(
                f"checkpoint format version {version} is newer than supported "
                f"{CHECKPOINT_VERSION}")
        config = config_from_header(json.loads(fh.read(header_len).decode()))
        (count,) = struct.unpack("<I", fh.read(4))
        params = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * size), dtype="<f8").reshape(shape)
            params[name] = data.astype(np.float64)
    return WnoModel(config, params)
