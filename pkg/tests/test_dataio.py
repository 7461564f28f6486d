import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narvid.data import (
    Batch,
    Dataset,
    Episode,
    batch_iter,
    read_container,
    write_container,
)
from narvid.errors import CorruptionError, FormatError, UsageError, ValidationError


def make_dataset(n=3, k=4, l=2, d=5, seed=0):
    r = np.random.default_rng(seed)
    eps = [Episode(id=f"ep{i:03d}",
                   query_tokens=r.normal(size=(l + 1, d)),
                   frames=r.normal(size=(k, d)),
                   captions=r.normal(size=(k, d)))
           for i in range(n)]
    return Dataset(episodes=eps, dim=d)


def test_round_trip_identity(tmp_path):
    ds = make_dataset()
    path = tmp_path / "data.nrv"
    write_container(ds, path)
    back = read_container(path)
    assert len(back) == len(ds) and back.dim == ds.dim
    for a, b in zip(ds.episodes, back.episodes):
        assert a.id == b.id
        np.testing.assert_array_equal(a.query_tokens, b.query_tokens)
        np.testing.assert_array_equal(a.frames, b.frames)
        np.testing.assert_array_equal(a.captions, b.captions)


def test_write_is_deterministic(tmp_path):
    ds = make_dataset(seed=7)
    p1, p2 = tmp_path / "a.nrv", tmp_path / "b.nrv"
    write_container(ds, p1)
    write_container(ds, p2)
    assert hashlib.sha256(p1.read_bytes()).hexdigest() == \
        hashlib.sha256(p2.read_bytes()).hexdigest()
    assert p1.with_suffix(".json").read_text() == p2.with_suffix(".json").read_text()


def test_empty_dataset_round_trips(tmp_path):
    path = tmp_path / "empty.nrv"
    write_container(Dataset(episodes=[], dim=8), path)
    back = read_container(path)
    assert len(back) == 0 and back.dim == 8


def test_sidecar_manifest_lists_episodes(tmp_path):
    ds = make_dataset(n=2, k=3, l=4)
    path = tmp_path / "d.nrv"
    write_container(ds, path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    assert manifest["episodes"] == [{"id": "ep000", "K": 3, "L": 4},
                                    {"id": "ep001", "K": 3, "L": 4}]


def test_bad_magic_is_format_error(tmp_path):
    path = tmp_path / "bad.nrv"
    ds = make_dataset(n=1)
    write_container(ds, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_container(path)


def test_bad_version_is_format_error(tmp_path):
    path = tmp_path / "v9.nrv"
    write_container(make_dataset(n=1), path)
    blob = bytearray(path.read_bytes())
    blob[4:8] = struct.pack("<I", 9)
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_container(path)


def test_truncated_payload_names_episode(tmp_path):
    path = tmp_path / "trunc.nrv"
    write_container(make_dataset(n=2), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-17])
    with pytest.raises(CorruptionError, match="ep001"):
        read_container(path)


def test_row_count_mismatch_is_corruption(tmp_path):
    # byte-edit the last episode's K upward so its payload runs past EOF
    ds = make_dataset(n=1, k=4, l=2, d=5)
    path = tmp_path / "badk.nrv"
    write_container(ds, path)
    blob = bytearray(path.read_bytes())
    # header: 4 magic + 12 header; episode: 2 + 5 id bytes, then L, K
    k_off = 4 + 12 + 2 + 5 + 4
    assert struct.unpack_from("<I", blob, k_off)[0] == 4
    struct.pack_into("<I", blob, k_off, 40)
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptionError, match="ep000"):
        read_container(path)


def test_nonfinite_values_rejected_on_write(tmp_path):
    ds = make_dataset(n=1)
    ds.episodes[0].frames[0, 0] = np.inf
    with pytest.raises(ValidationError):
        write_container(ds, tmp_path / "x.nrv")


def test_duplicate_ids_rejected():
    ds = make_dataset(n=2)
    ds.episodes[1].id = ds.episodes[0].id
    with pytest.raises(ValidationError):
        ds.validate()


@given(st.integers(1, 5), st.lists(st.tuples(st.integers(1, 4), st.integers(1, 5)),
                                   min_size=1, max_size=4),
       st.integers(0, 2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_round_trip_property(d_extra, sizes, seed):
    import tempfile
    from pathlib import Path
    d = 2 + d_extra
    r = np.random.default_rng(seed)
    eps = [Episode(id=f"e{i}",
                   query_tokens=r.normal(size=(l + 1, d)),
                   frames=r.normal(size=(k, d)),
                   captions=r.normal(size=(k, d)))
           for i, (l, k) in enumerate(sizes)]
    ds = Dataset(episodes=eps, dim=d)
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "p.nrv"
        write_container(ds, path)
        first = path.read_bytes()
        back = read_container(path)
        write_container(back, path)
        assert path.read_bytes() == first


def test_batch_iter_no_shuffle_partitions():
    ds = make_dataset(n=4)
    batches = list(batch_iter(ds, 2, shuffle=False))
    assert [b.indices for b in batches] == [(0, 1), (2, 3)]


def test_batch_iter_remainder_dropped():
    ds = make_dataset(n=5)
    batches = list(batch_iter(ds, 2, seed=3, shuffle=True))
    assert len(batches) == 2
    used = [i for b in batches for i in b.indices]
    assert len(set(used)) == 4


def test_batch_iter_deterministic_and_epoch_sensitive():
    ds = make_dataset(n=8)
    a = [b.indices for b in batch_iter(ds, 4, seed=11, epoch=0)]
    b = [b.indices for b in batch_iter(ds, 4, seed=11, epoch=0)]
    c = [b.indices for b in batch_iter(ds, 4, seed=11, epoch=1)]
    assert a == b
    assert a != c


def test_batch_iter_rejects_oversized_batch():
    ds = make_dataset(n=3)
    with pytest.raises(UsageError):
        list(batch_iter(ds, 4))


def test_batch_len():
    assert len(Batch(indices=(1, 2, 3))) == 3
