import json
import struct

import numpy as np
import pytest

from dgasn.model import MAGIC, ContainerError, init_params, load_params, save_params
from dgasn.presets import PRESETS, preset


def small():
    return init_params(5, 2, 2, 3, attr_dim=7, label_dim=4, edge_operator="hadamard")


def test_round_trip_bit_exact(tmp_path):
    p = small()
    save_params(p, tmp_path / "a.bin")
    q = load_params(tmp_path / "a.bin")
    assert q.architecture() == p.architecture()
    assert list(q.arrays) == list(p.arrays)
    for k in p.arrays:
        assert q.arrays[k].tobytes() == p.arrays[k].tobytes()
    save_params(q, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_layout(tmp_path):
    p = small()
    save_params(p, tmp_path / "a.bin")
    buf = (tmp_path / "a.bin").read_bytes()
    assert buf[:8] == MAGIC
    version, hlen = struct.unpack_from("<II", buf, 8)
    assert version == 1
    assert json.loads(buf[16:16 + hlen])["edge_operator"] == "hadamard"
    n_values = sum(a.size for a in p.arrays.values())
    assert buf[-8:] == struct.pack("<d", list(p.arrays.values())[-1].reshape(-1)[-1])
    assert len(buf) > 8 * n_values


def test_rejects_bad_magic_and_version(tmp_path):
    save_params(small(), tmp_path / "a.bin")
    buf = bytearray((tmp_path / "a.bin").read_bytes())
    (tmp_path / "m.bin").write_bytes(b"NOTPARAM" + bytes(buf[8:]))
    with pytest.raises(ContainerError, match="not a parameter container"):
        load_params(tmp_path / "m.bin")
    buf[8:12] = struct.pack("<I", 2)
    (tmp_path / "v.bin").write_bytes(bytes(buf))
    with pytest.raises(ContainerError, match="version 2"):
        load_params(tmp_path / "v.bin")


def test_rejects_truncation_and_trailing_bytes(tmp_path):
    save_params(small(), tmp_path / "a.bin")
    buf = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(buf[:-8])
    with pytest.raises(ContainerError):
        load_params(tmp_path / "t.bin")
    (tmp_path / "x.bin").write_bytes(buf + b"\0")
    with pytest.raises(ContainerError, match="trailing"):
        load_params(tmp_path / "x.bin")


def test_rejects_shape_table_mismatch(tmp_path):
    p = small()
    p.arrays["edge/0/W"] = p.arrays["edge/0/W"][:, :5]
    save_params(p, tmp_path / "a.bin")
    with pytest.raises(ContainerError, match="shape table"):
        load_params(tmp_path / "a.bin")


def test_init_streams_are_independent():
    a = init_params(1, 2, 2, 3, 7, 4)
    b = init_params(1, 2, 2, 3, 7, 9)  # only the node head changes shape
    for k in a.names("encoder") + a.names("edge") + a.names("domain"):
        np.testing.assert_array_equal(a.arrays[k], b.arrays[k])


def test_presets_pin_every_task():
    rows = {
        "C→A": (8, 8, 64, 1.0, 1e-1, 1e-3),
        "D→A": (3, 8, 64, 1e-2, 1e-1, 1e-3),
        "A→C": (7, 8, 64, 1.0, 1e-3, 5e-4),
        "D→C": (8, 8, 32, 1.0, 1e-4, 1e-3),
        "A→D": (8, 8, 64, 1.0, 1e-2, 1e-3),
        "C→D": (7, 8, 64, 1.0, 1e-1, 5e-4),
    }
    assert set(PRESETS) == set(rows)
    for task, (L, K, d, eta, xi, wd) in rows.items():
        assert preset(task) == dict(layers=L, heads=K, dim=d, eta=eta, xi=xi, weight_decay=wd)


def test_preset_aliases():
    assert preset("C->A") == preset("C→A") == preset("ca")
    assert preset("D->A")["eta"] == 1e-2
    with pytest.raises(KeyError):
        preset("A→A")
