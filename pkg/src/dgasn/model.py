"""Learnable parameter set and its binary container.

Container layout (little-endian)::

    8 bytes   magic b"DGASNPRM"
    u32       format version
    u32       length of the architecture header, then that many bytes of JSON
    u32       number of tensors
    per tensor: u16 name length, UTF-8 name, u8 ndim, u32 * ndim dims
    raw float64 data of every tensor, in table order, row-major
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .encoder import init_encoder
from .heads import DOMAIN_HIDDEN, EDGE_HIDDEN, NODE_HIDDEN, edge_embed_dim, init_mlp
from .rng import stream

__all__ = ["ModelParams", "ContainerError", "init_params", "save_params", "load_params", "MAGIC", "VERSION"]

MAGIC = b"DGASNPRM"
VERSION = 1

GROUPS = ("encoder", "node", "edge", "domain")


class ContainerError(ValueError):
    """Parameter file is malformed or does not match the expected architecture."""


@dataclass
class ModelParams:
    """All learnable arrays, keyed ``group/...`` with groups encoder, node, edge, domain."""

    arrays: dict
    layers: int
    heads: int
    dim: int
    attr_dim: int
    label_dim: int
    edge_operator: str = "concatenate"

    @property
    def node_dim(self):
        return self.heads * self.dim

    def names(self, group=None):
        if group is None:
            return list(self.arrays)
        return [k for k in self.arrays if k.split("/", 1)[0] == group]

    def architecture(self):
        return {
            "layers": self.layers,
            "heads": self.heads,
            "dim": self.dim,
            "attr_dim": self.attr_dim,
            "label_dim": self.label_dim,
            "edge_operator": self.edge_operator,
        }

    def expected_shapes(self):
        return {k: v.shape for k, v in _shape_template(**self.architecture()).items()}

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, **self.architecture())


def _shape_template(layers, heads, dim, attr_dim, label_dim, edge_operator):
    rng = np.random.default_rng(0)
    return _build(rng, rng, rng, rng, layers, heads, dim, attr_dim, label_dim, edge_operator)


def _build(r_enc, r_node, r_edge, r_dom, layers, heads, dim, attr_dim, label_dim, edge_operator):
    node_dim = heads * dim
    e_dim = edge_embed_dim(node_dim, edge_operator)
    arrays = {}
    arrays.update(init_encoder(r_enc, attr_dim, layers, heads, dim))
    arrays.update(init_mlp(r_node, "node", node_dim, NODE_HIDDEN, max(label_dim, 1)))
    arrays.update(init_mlp(r_edge, "edge", e_dim, EDGE_HIDDEN, 1))
    arrays.update(init_mlp(r_dom, "domain", e_dim, DOMAIN_HIDDEN, 1))
    return arrays


def init_params(seed, layers, heads, dim, attr_dim, label_dim, edge_operator="concatenate"):
    """Seeded initialization; each group draws from its own named stream."""
    arrays = _build(
        stream(seed, "init/encoder"),
        stream(seed, "init/node"),
        stream(seed, "init/edge"),
        stream(seed, "init/domain"),
        layers, heads, dim, attr_dim, label_dim, edge_operator,
    )
    return ModelParams(arrays, layers, heads, dim, attr_dim, label_dim, edge_operator)


def save_params(params: ModelParams, path):
    header = json.dumps(params.architecture(), sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<II", VERSION, len(header)), header, struct.pack("<I", len(params.arrays))]
    for name, arr in params.arrays.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    for arr in params.arrays.values():
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise ContainerError(f"{path}: not a parameter container")
    pos = 8
    try:
        version, hlen = struct.unpack_from("<II", buf, pos)
        pos += 8
        if version != VERSION:
            raise ContainerError(f"{path}: unsupported container version {version}")
        arch = json.loads(buf[pos:pos + hlen].decode("utf-8"))
        pos += hlen
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        table = []
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", buf, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, pos)
            pos += 4 * ndim
            table.append((name, shape))
        arrays = {}
        for name, shape in table:
            size = int(np.prod(shape))
            arrays[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except (struct.error, ValueError, KeyError) as exc:
        if isinstance(exc, ContainerError):
            raise
        raise ContainerError(f"{path}: truncated or corrupt container ({exc})") from None
    if pos != len(buf):
        raise ContainerError(f"{path}: {len(buf) - pos} trailing bytes")
    params = ModelParams(arrays, **arch)
    expected = params.expected_shapes()
    got = {k: v.shape for k, v in arrays.items()}
    if expected != got:
        missing = sorted(set(expected) ^ set(got)) or sorted(k for k in expected if expected[k] != got[k])
        raise ContainerError(f"{path}: shape table does not match architecture ({missing[:3]})")
    return params
