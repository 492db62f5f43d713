import numpy as np
import pytest

from diverkit.core import Frame, ValidationError
from diverkit.raster import (
    CorruptFrameError,
    read_pnm,
    read_sequence,
    read_truth,
    write_pnm,
    write_sequence,
    write_truth,
)


def test_pgm_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (12, 17)).astype(np.float64)
    path = tmp_path / "a.pgm"
    write_pnm(path, img)
    assert (read_pnm(path) == img).all()


def test_ppm_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.integers(0, 256, (9, 7, 3)).astype(np.float64)
    path = tmp_path / "a.ppm"
    write_pnm(path, img)
    assert (read_pnm(path) == img).all()


def test_reader_tolerates_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# a comment\n2 2\n255\n\x00\x01\x02\x03")
    assert (read_pnm(path) == [[0, 1], [2, 3]]).all()


def test_corrupt_header_raises(tmp_path):
    path = tmp_path / "bad.pgm"
    path.write_bytes(b"JUNK")
    with pytest.raises(CorruptFrameError):
        read_pnm(path)


def test_truncated_body_raises(tmp_path):
    path = tmp_path / "short.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x01")
    with pytest.raises(CorruptFrameError):
        read_pnm(path)


def test_sequence_roundtrip_with_manifest(tmp_path):
    frames = [Frame(np.full((6, 8), float(10 * i)), index=i, fps=5.0) for i in range(4)]
    write_sequence(tmp_path / "seq", frames)
    manifest_names = sorted(p.name for p in (tmp_path / "seq").iterdir())
    assert "manifest.json" in manifest_names
    assert "frame_000003.pgm" in manifest_names
    back = read_sequence(tmp_path / "seq")
    assert len(back) == 4
    assert back[2].fps == 5.0 and back[2].index == 2
    assert (back[1].pixels == 10.0).all()


def test_rgb_sequence_uses_ppm(tmp_path):
    frames = [Frame(np.zeros((6, 8, 3)), index=0)]
    write_sequence(tmp_path / "seq", frames)
    assert (tmp_path / "seq" / "frame_000000.ppm").exists()


def test_missing_manifest_rejected(tmp_path):
    (tmp_path / "seq").mkdir()
    with pytest.raises(ValidationError):
        read_sequence(tmp_path / "seq")


def test_empty_sequence_rejected(tmp_path):
    with pytest.raises(ValidationError):
        write_sequence(tmp_path / "seq", [])


def test_truth_roundtrip(tmp_path):
    write_truth(tmp_path, {"centers": [[1.0, 2.0]], "windows": [3]})
    assert read_truth(tmp_path) == {"centers": [[1.0, 2.0]], "windows": [3]}
    assert read_truth(tmp_path / "nowhere") is None
