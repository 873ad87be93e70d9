"""``LAPNET01`` container for networks and their pruning masks.

Layout (all integers little-endian)::

    b"LAPNET01"
    u32 ndim, u32 dims[ndim]                 input shape
    u32 n_layers
    per layer: u8 kind tag, then
        dense      tensor W, tensor b
        conv2d     u8 padding, tensor K, tensor b
        batchnorm  tensor gamma, beta, running_mean, running_var; f64 eps, f64 momentum
        activation u8 function
        maxpool2d / flatten: nothing
    u32 n_masks
    per mask: u32 layer, u64 surviving, u32 ndim, u32 dims[ndim],
              ceil(size / 8) bytes of bits packed LSB-first in row-major order

    tensor := u32 ndim, u32 dims[ndim], f64 data[prod(dims)]
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .layers import ACTIVATIONS, Activation, BatchNorm, Conv2d, Dense, Flatten, MaxPool2d
from .network import Network

MAGIC = b"LAPNET01"
KIND_TAGS = {"dense": 0, "conv2d": 1, "batchnorm": 2, "activation": 3, "maxpool2d": 4, "flatten": 5}
PADDINGS = ("same-zero", "circular")


class FormatError(ValueError):
    pass


def _put_shape(out, shape):
    out.write(struct.pack("<I", len(shape)))
    out.write(struct.pack(f"<{len(shape)}I", *shape))


def _put_tensor(out, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    _put_shape(out, arr.shape)
    out.write(arr.tobytes())


def _read(buf, n):
    data = buf.read(n)
    if len(data) != n:
        raise FormatError("unexpected end of LAPNET01 data")
    return data


def _get_shape(buf):
    (ndim,) = struct.unpack("<I", _read(buf, 4))
    return struct.unpack(f"<{ndim}I", _read(buf, 4 * ndim))


def _get_tensor(buf):
    shape = _get_shape(buf)
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(_read(buf, 8 * n), dtype="<f8").astype(np.float64).reshape(shape)


def dumps(net: Network) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    _put_shape(out, net.input_shape)
    out.write(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        out.write(struct.pack("<B", KIND_TAGS[layer.kind]))
        if layer.kind == "dense":
            _put_tensor(out, layer.params["W"])
            _put_tensor(out, layer.params["b"])
        elif layer.kind == "conv2d":
            out.write(struct.pack("<B", PADDINGS.index(layer.padding)))
            _put_tensor(out, layer.params["W"])
            _put_tensor(out, layer.params["b"])
        elif layer.kind == "batchnorm":
            for arr in (layer.params["gamma"], layer.params["beta"],
                        layer.running_mean, layer.running_var):
                _put_tensor(out, arr)
            out.write(struct.pack("<2d", layer.eps, layer.momentum))
        elif layer.kind == "activation":
            out.write(struct.pack("<B", ACTIVATIONS.index(layer.fn)))
    out.write(struct.pack("<I", len(net.masks)))
    for i in sorted(net.masks):
        bits = np.asarray(net.masks[i]) != 0
        out.write(struct.pack("<IQ", i, int(bits.sum())))
        _put_shape(out, bits.shape)
        out.write(np.packbits(bits.ravel(), bitorder="little").tobytes())
    return out.getvalue()


def loads(data: bytes) -> Network:
    buf = io.BytesIO(data)
    if _read(buf, 8) != MAGIC:
        raise FormatError("not a LAPNET01 container (bad magic)")
    input_shape = _get_shape(buf)
    (n_layers,) = struct.unpack("<I", _read(buf, 4))
    layers = []
    for _ in range(n_layers):
        (tag,) = struct.unpack("<B", _read(buf, 1))
        if tag == 0:
            layers.append(Dense(_get_tensor(buf), _get_tensor(buf)))
        elif tag == 1:
            (pad,) = struct.unpack("<B", _read(buf, 1))
            layers.append(Conv2d(_get_tensor(buf), _get_tensor(buf), padding=PADDINGS[pad]))
        elif tag == 2:
            g, b, mu, var = (_get_tensor(buf) for _ in range(4))
            eps, momentum = struct.unpack("<2d", _read(buf, 16))
            layers.append(BatchNorm(g, b, mu, var, eps=eps, momentum=momentum))
        elif tag == 3:
            (fn,) = struct.unpack("<B", _read(buf, 1))
            layers.append(Activation(ACTIVATIONS[fn]))
        elif tag == 4:
            layers.append(MaxPool2d())
        elif tag == 5:
            layers.append(Flatten())
        else:
            raise FormatError(f"unknown layer tag {tag}")
    (n_masks,) = struct.unpack("<I", _read(buf, 4))
    masks = {}
    for _ in range(n_masks):
        i, surviving = struct.unpack("<IQ", _read(buf, 12))
        shape = _get_shape(buf)
        size = int(np.prod(shape))
        packed = np.frombuffer(_read(buf, (size + 7) // 8), dtype=np.uint8)
        bits = np.unpackbits(packed, count=size, bitorder="little").reshape(shape)
        if int(bits.sum()) != surviving:
            raise FormatError(f"mask for layer {i}: {bits.sum()} set bits, header says {surviving}")
        masks[i] = bits.astype(np.float64)
    if buf.read(1):
        raise FormatError("trailing bytes after LAPNET01 data")
    return Network(layers, input_shape, masks)


def save(net: Network, path) -> None:
    Path(path).write_bytes(dumps(net))


def load(path) -> Network:
    return loads(Path(path).read_bytes())
