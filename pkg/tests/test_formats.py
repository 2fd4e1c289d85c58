from __future__ import annotations

import json
import struct
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from tensordenoise.errors import FormatError
from tensordenoise.formats.bundle import (
    FactorBundle,
    bundle_from,
    factors_from,
    read_bundle,
    validate_bundle,
    write_bundle,
)
from tensordenoise.formats.cifar import load_cifar
from tensordenoise.formats.container import decode_tensor, encode_tensor, read_tensor, write_tensor
from tensordenoise.formats.images import load_image, read_png, save_image, write_png
from tensordenoise.tensors.decomposition import (
    tt_reconstruct,
    tt_svd,
    tucker_hosvd,
    tucker_reconstruct,
)
from tensordenoise.tensors.kernels import ConvKernel, reconstruct_kernel, tucker2_factorize

# --- tensor container ------------------------------------------------------


def test_float64_roundtrip_is_bit_exact(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.standard_normal((13, 13, 3, 8, 8))
    path = tmp_path / "p.tnsr"
    write_tensor(path, t)
    assert path.stat().st_size == 10 + 5 * 8 + 13 * 13 * 3 * 8 * 8 * 8
    assert read_tensor(path).tobytes() == t.tobytes()


def test_float32_roundtrip(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.random((2, 3))
    write_tensor(tmp_path / "f.tnsr", t, dtype="float32")
    assert (tmp_path / "f.tnsr").stat().st_size == 10 + 2 * 8 + 6 * 4
    np.testing.assert_array_equal(read_tensor(tmp_path / "f.tnsr"), t.astype(np.float32))


def test_scalar_tensor_and_header_layout() -> None:
    blob = encode_tensor(np.array([2.5]))
    assert blob[:4] == b"TNSR"
    assert struct.unpack_from("<IBBQ", blob, 4) == (1, 2, 1, 1)
    assert decode_tensor(blob).tolist() == [2.5]


@pytest.mark.parametrize(
    ("mutate", "offset", "needle"),
    [
        (lambda b: b"X" + b[1:], 0, "magic"),
        (lambda b: b[:4] + struct.pack("<I", 7) + b[8:], 4, "version"),
        (lambda b: b[:8] + b"\x09" + b[9:], 8, "dtype"),
        (lambda b: b[:9] + b"\x00" + b[10:], 9, "empty shape"),
        (lambda b: b[:6], 6, "truncated header"),
        (lambda b: b[:14], 14, "truncated dims"),
        (lambda b: b[:10] + struct.pack("<QQ", 2, 0) + b[26:], 18, "zero"),
        (lambda b: b[:-3], 55, "truncated payload"),
        (lambda b: b + b"\x00", 58, "trailing"),
    ],
)
def test_decode_errors_carry_offsets(
    mutate: Callable[[bytes], bytes], offset: int, needle: str
) -> None:
    blob = encode_tensor(np.arange(4.0).reshape(2, 2))
    assert len(blob) == 58
    with pytest.raises(FormatError, match=needle) as info:
        decode_tensor(mutate(blob))
    assert info.value.offset == offset


def test_read_missing_and_corrupt_files(tmp_path: Path) -> None:
    with pytest.raises(FormatError, match="missing.tnsr"):
        read_tensor(tmp_path / "missing.tnsr")
    bad = tmp_path / "bad.tnsr"
    bad.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(FormatError, match="bad.tnsr") as info:
        read_tensor(bad)
    assert info.value.offset == 0


# --- factor bundles --------------------------------------------------------


def test_tucker_bundle_roundtrip(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.standard_normal((6, 3, 4, 4))
    f = tucker_hosvd(t, (3, 3, 2, 2))
    write_bundle(tmp_path / "tucker.json", f)
    b = read_bundle(tmp_path / "tucker.json")
    assert b.method == "tucker" and b.ranks == (3, 3, 2, 2)
    assert sorted(b.tensors) == ["core", "factor_1", "factor_2", "factor_3", "factor_4"]
    restored = factors_from(b)
    np.testing.assert_allclose(tucker_reconstruct(restored), tucker_reconstruct(f), atol=1e-12)
    index = json.loads((tmp_path / "tucker.json").read_text())
    assert {e["file"] for e in index["entries"]} == {f"tucker.{r}.tnsr" for r in b.tensors}


def test_tt_and_kernel_bundles_roundtrip(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.standard_normal((5, 4, 3))
    tt, _ = tt_svd(t, [2, 2])
    write_bundle(tmp_path / "tt.json", tt)
    restored_tt = factors_from(read_bundle(tmp_path / "tt.json"))
    np.testing.assert_allclose(tt_reconstruct(restored_tt), tt_reconstruct(tt), atol=1e-12)
    k, _ = tucker2_factorize(ConvKernel.of(rng.standard_normal((3, 3, 8, 8))), 4, 4)
    write_bundle(tmp_path / "k.json", k)
    restored = factors_from(read_bundle(tmp_path / "k.json"))
    np.testing.assert_allclose(
        reconstruct_kernel(restored).tensor, reconstruct_kernel(k).tensor, atol=1e-12
    )


def test_bundle_validation(rng: np.random.Generator) -> None:
    b = bundle_from(tucker_hosvd(rng.standard_normal((4, 4)), (2, 2)))
    missing = FactorBundle(b.method, b.source_shape, b.ranks, {"core": b.tensors["core"]})
    with pytest.raises(FormatError, match="roles"):
        validate_bundle(missing)
    wrong = dict(b.tensors, factor_1=np.zeros((4, 3)))
    with pytest.raises(FormatError, match="factor_1"):
        validate_bundle(FactorBundle(b.method, b.source_shape, b.ranks, wrong))


def test_bundle_index_errors(tmp_path: Path) -> None:
    with pytest.raises(FormatError):
        read_bundle(tmp_path / "none.json")
    index = {"method": "cp", "source_shape": [2], "ranks": [1], "entries": []}
    (tmp_path / "x.json").write_text(json.dumps(index))
    with pytest.raises(FormatError, match="unknown bundle method"):
        read_bundle(tmp_path / "x.json")


# --- CIFAR -----------------------------------------------------------------


def _record(label: bytes, fill: int = 0) -> bytes:
    return label + bytes([fill]) * 3072


def test_cifar10_single_black_record(tmp_path: Path) -> None:
    path = tmp_path / "one.bin"
    path.write_bytes(_record(b"\x07"))
    batch = load_cifar(path, "cifar10")
    assert batch.images.shape == (1, 3, 32, 32)
    assert batch.labels.tolist() == [7]
    assert np.all(batch.images == 0.0)


def test_cifar_plane_layout_and_scaling(tmp_path: Path) -> None:
    pixels = np.zeros((3, 32, 32), dtype=np.uint8)
    pixels[0, 0, 1] = 255  # red plane, row 0, column 1
    pixels[2, 31, 0] = 51
    path = tmp_path / "planes.bin"
    path.write_bytes(b"\x02" + pixels.tobytes())
    img = load_cifar(path).images[0]
    assert img[0, 0, 1] == 1.0
    assert img[2, 31, 0] == 0.2
    assert img.sum() == pytest.approx(1.2)


def test_cifar100_uses_fine_label(tmp_path: Path) -> None:
    path = tmp_path / "c100.bin"
    path.write_bytes(_record(b"\x03\x58") + _record(b"\x01\x02", fill=255))
    batch = load_cifar(path, "cifar100")
    assert batch.labels.tolist() == [88, 2]
    assert batch.num_classes == 100
    assert np.all(batch.images[1] == 1.0)


def test_cifar_truncation_and_bad_labels(tmp_path: Path) -> None:
    path = tmp_path / "short.bin"
    path.write_bytes(_record(b"\x01") + _record(b"\x02")[:100])
    with pytest.raises(FormatError, match="truncated") as info:
        load_cifar(path)
    assert info.value.offset == 3073
    (tmp_path / "empty.bin").write_bytes(b"")
    with pytest.raises(FormatError):
        load_cifar(tmp_path / "empty.bin")
    (tmp_path / "label.bin").write_bytes(_record(b"\x0b"))
    with pytest.raises(FormatError, match="out of range"):
        load_cifar(tmp_path / "label.bin")
    with pytest.raises(FormatError, match="no such"):
        load_cifar(tmp_path / "nothere.bin")


# --- PNG -------------------------------------------------------------------


def test_white_pixel_png(tmp_path: Path) -> None:
    Image.new("RGB", (1, 1), (255, 255, 255)).save(tmp_path / "w.png")
    t = read_png(tmp_path / "w.png")
    assert t.shape == (3, 1, 1)
    assert np.all(t == 1.0)


def test_png_bytes_survive_read_write(tmp_path: Path, rng: np.random.Generator) -> None:
    pixels = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(tmp_path / "in.png")
    write_png(tmp_path / "out.png", read_png(tmp_path / "in.png"))
    with Image.open(tmp_path / "out.png") as img:
        np.testing.assert_array_equal(np.asarray(img), pixels)


def test_png_quantization_bound(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.random((1, 6, 4))
    save_image(tmp_path / "g.png", t)
    back = load_image(tmp_path / "g.png")
    assert back.shape == (1, 6, 4)
    assert np.max(np.abs(back - t)) <= 1 / 510 + 1e-12


def test_png_rejects_unsupported_modes(tmp_path: Path) -> None:
    Image.new("I;16", (2, 2)).save(tmp_path / "deep.png")
    with pytest.raises(FormatError, match="mode"):
        read_png(tmp_path / "deep.png")
    Image.new("RGBA", (2, 2)).save(tmp_path / "alpha.png")
    with pytest.raises(FormatError):
        read_png(tmp_path / "alpha.png")


def test_load_image_dispatches_on_suffix(tmp_path: Path, rng: np.random.Generator) -> None:
    t = rng.random((3, 4, 4))
    save_image(tmp_path / "t.tnsr", t)
    assert load_image(tmp_path / "t.tnsr").tobytes() == t.tobytes()
