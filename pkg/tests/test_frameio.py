import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipeflow.errors import CorruptSequence, DecodeError, DimensionMismatch, EmptyInput, ManifestMissing
from pipeflow.frameio import Frame, decode_pnm, encode_pnm, load_sequence, write_sequence


def random_frames(rng, n, w, h, c=3):
    return [Frame(rng.integers(0, 256, (h, w, c), dtype=np.uint8), i) for i in range(n)]


def test_load_counts_frames(tmp_path, rng):
    write_sequence(random_frames(rng, 10, 64, 64), tmp_path)
    seq = load_sequence(tmp_path)
    assert seq.manifest.frame_count == 10
    assert len(seq) == 10
    assert seq[7].index == 7


def test_missing_frame_file_is_corrupt(tmp_path, rng):
    write_sequence(random_frames(rng, 10, 16, 16), tmp_path)
    (tmp_path / "frame_000009.ppm").unlink()
    with pytest.raises(CorruptSequence):
        load_sequence(tmp_path)


def test_extra_frame_file_is_corrupt(tmp_path, rng):
    write_sequence(random_frames(rng, 3, 16, 16), tmp_path)
    (tmp_path / "frame_000003.ppm").write_bytes((tmp_path / "frame_000000.ppm").read_bytes())
    with pytest.raises(CorruptSequence):
        load_sequence(tmp_path)


def test_missing_manifest(tmp_path):
    with pytest.raises(ManifestMissing):
        load_sequence(tmp_path)


def test_header_echo_non_square(rng):
    px = rng.integers(0, 256, (48, 64, 3), dtype=np.uint8)
    buf = b"P6\n64 48\n255\n" + px.tobytes()
    f = decode_pnm(buf)
    assert (f.width, f.height, f.channels) == (64, 48, 3)
    assert f.data == px.tobytes()


def test_header_with_comment_and_single_whitespace(rng):
    px = rng.integers(0, 256, (2, 3), dtype=np.uint8)
    # the payload starts with a whitespace byte value; only one separator may be consumed
    px[0, 0] = ord("\n")
    f = decode_pnm(b"P5 # comment\n3 2 255\n" + px.tobytes())
    assert f.channels == 1
    assert np.array_equal(f.pixels[:, :, 0], px)


@pytest.mark.parametrize("buf", [b"P3\n1 1\n255\n\x00\x00\x00", b"P6\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00",
                                 b"P6\n", b"P5\nx 1\n255\n\x00"])
def test_malformed_header(buf):
    with pytest.raises(DecodeError):
        decode_pnm(buf)


def test_corrupt_frame_in_sequence(tmp_path, rng):
    write_sequence(random_frames(rng, 2, 8, 8), tmp_path)
    (tmp_path / "frame_000001.ppm").write_bytes(b"P6\n8 8\n255\n")
    seq = load_sequence(tmp_path)
    with pytest.raises(DecodeError):
        seq[1]


def test_round_trip_three_frames(tmp_path, rng):
    frames = random_frames(rng, 3, 20, 10)
    write_sequence(frames, tmp_path, fps="30000/1001")
    seq = load_sequence(tmp_path)
    assert [f.data for f in seq] == [f.data for f in frames]
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m == {"fps_den": 1001, "fps_num": 30000, "frame_count": 3, "height": 10,
                 "pattern": "frame_{:06}.ppm", "width": 20}


def test_mixed_sizes_rejected(tmp_path, rng):
    frames = [Frame(np.zeros((64, 64, 3), np.uint8), 0), Frame(np.zeros((32, 32, 3), np.uint8), 1)]
    with pytest.raises(DimensionMismatch):
        write_sequence(frames, tmp_path)


def test_empty_rejected(tmp_path):
    with pytest.raises(EmptyInput):
        write_sequence([], tmp_path)


def test_oversized_frame_rejected():
    with pytest.raises(DimensionMismatch):
        Frame(np.zeros((8193, 1), np.uint8))


def test_frames_are_immutable(rng):
    f = random_frames(rng, 1, 4, 4)[0]
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1


@settings(max_examples=25, deadline=None)
@given(w=st.integers(1, 256), h=st.integers(1, 256), c=st.sampled_from([1, 3]),
       n=st.integers(1, 3), seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(tmp_path_factory, w, h, c, n, seed):
    rng = np.random.default_rng(seed)
    frames = random_frames(rng, n, w, h, c)
    d = tmp_path_factory.mktemp("rt")
    m = write_sequence(frames, d)
    seq = load_sequence(d)
    assert m.frame_count == len(seq) == n
    for a, b in zip(frames, seq):
        assert a.data == b.data and a.shape == b.shape and a.index == b.index
    assert encode_pnm(frames[0]) == (d / m.filename(0)).read_bytes()
