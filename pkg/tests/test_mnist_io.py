import gzip
import os
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from augmentlab import classify as cl
from augmentlab import mnist_io as io

MNIST_DIR = os.environ.get("AUGMENTLAB_MNIST_DIR", "")


def image_bytes(count=1, rows=28, cols=28, payload=None):
    body = bytes(count * rows * cols) if payload is None else payload
    return bytes.fromhex("00000803") + struct.pack(">3I", count, rows, cols) + body


def test_single_black_image():
    imgs = io.read_idx_images(image_bytes())
    assert imgs.shape == (1, 28, 28)
    assert imgs.dtype == np.float64
    np.testing.assert_array_equal(imgs, 0.0)


def test_labels_seven_two():
    data = bytes.fromhex("00000801") + struct.pack(">I", 2) + bytes([7, 2])
    np.testing.assert_array_equal(io.read_idx_labels(data), [7, 2])


def test_pixel_scaling():
    imgs = io.read_idx_images(image_bytes(1, 1, 3, bytes([0, 51, 255])))
    np.testing.assert_allclose(imgs[0, 0], [0.0, 0.2, 1.0])


def test_bad_magic_offset():
    data = bytearray(image_bytes())
    data[3] = 0x01
    with pytest.raises(io.IdxFormatError) as err:
        io.read_idx_images(bytes(data))
    assert err.value.offset == 0


def test_truncated_payload_offset():
    data = image_bytes()[:-10]
    with pytest.raises(io.IdxFormatError) as err:
        io.read_idx_images(data)
    assert err.value.offset == len(data)


def test_truncated_header():
    with pytest.raises(io.IdxFormatError):
        io.read_idx_images(bytes.fromhex("00000803") + bytes(5))
    with pytest.raises(io.IdxFormatError):
        io.read_idx_images(b"\x00\x00")


def test_trailing_bytes_offset():
    data = image_bytes() + b"\x00\x00"
    with pytest.raises(io.IdxFormatError) as err:
        io.read_idx_images(data)
    assert err.value.offset == 16 + 784


def test_huge_header_count_fails_before_allocating():
    # a header claiming 2^32 - 1 images must be rejected on length alone
    data = bytes.fromhex("00000803") + struct.pack(">3I", 2**32 - 1, 28, 28)
    with pytest.raises(io.IdxFormatError, match="truncated payload"):
        io.read_idx_images(data)


def test_label_out_of_range():
    data = bytes.fromhex("00000801") + struct.pack(">I", 3) + bytes([1, 12, 3])
    with pytest.raises(io.IdxFormatError) as err:
        io.read_idx_labels(data)
    assert err.value.offset == 9


@given(arrays(np.uint8, st.tuples(st.integers(0, 4), st.integers(1, 6), st.integers(1, 6))))
def test_image_round_trip(raw):
    imgs = raw / 255.0
    np.testing.assert_array_equal(io.read_idx_images(io.write_idx_images(imgs)), imgs)


@given(arrays(np.uint8, st.integers(0, 30), elements=st.integers(0, 9)))
def test_label_round_trip(labels):
    np.testing.assert_array_equal(io.read_idx_labels(io.write_idx_labels(labels)), labels)


def test_writer_rejects_bad_shapes():
    with pytest.raises(ValueError):
        io.write_idx_images(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        io.write_idx_labels(np.array([-1]))


def test_load_mnist_from_directory(tmp_path):
    d = io.synthetic_digits(12, seed=1, split="test")
    (tmp_path / "t10k-images-idx3-ubyte.gz").write_bytes(gzip.compress(io.write_idx_images(d.images)))
    (tmp_path / "t10k-labels-idx1-ubyte").write_bytes(io.write_idx_labels(d.labels))
    loaded = io.load_mnist(tmp_path, "test")
    assert loaded.split == "test" and len(loaded) == 12
    np.testing.assert_array_equal(loaded.labels, d.labels)
    np.testing.assert_allclose(loaded.images, d.images, atol=0.5 / 255 + 1e-12)
    with pytest.raises(FileNotFoundError):
        io.load_mnist(tmp_path, "train")


@pytest.mark.mnist
@pytest.mark.skipif(not MNIST_DIR, reason="set AUGMENTLAB_MNIST_DIR to the MNIST IDX files")
def test_real_mnist_sizes():
    train = io.load_mnist(MNIST_DIR, "train")
    test = io.load_mnist(MNIST_DIR, "test")
    assert train.images.shape == (60_000, 28, 28)
    assert test.images.shape == (10_000, 28, 28)


# -- synthetic digits --------------------------------------------------------

def test_ten_images_one_per_class():
    d = io.synthetic_digits(10, seed=0)
    assert sorted(d.labels.tolist()) == list(range(10))
    assert d.images.shape == (10, 28, 28)
    assert d.images.min() >= 0.0 and d.images.max() <= 1.0


def test_uneven_count_balance():
    counts = np.bincount(io.synthetic_digits(23, seed=0).labels, minlength=10)
    assert counts.tolist() == [3, 3, 3] + [2] * 7


def test_synthetic_is_deterministic():
    a, b = io.synthetic_digits(30, seed=4), io.synthetic_digits(30, seed=4)
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, io.synthetic_digits(30, seed=5).images)


def test_train_and_test_splits_differ():
    tr = io.synthetic_digits(30, seed=0, split="train")
    te = io.synthetic_digits(30, seed=0, split="test")
    assert not np.array_equal(tr.images, te.images)


def test_empty_and_negative_counts():
    assert len(io.synthetic_digits(0)) == 0
    with pytest.raises(ValueError):
        io.synthetic_digits(-1)


def test_dataset_validates_lengths():
    with pytest.raises(ValueError):
        io.Dataset(np.zeros((2, 28, 28)), np.zeros(3))
    d = io.synthetic_digits(10)
    assert len(d.subset(slice(0, 4))) == 4


def test_mlp_learns_synthetic_digits():
    # measured 0.948 with this configuration; threshold frozen at 0.90
    train = io.synthetic_digits(5000, seed=0)
    test = io.synthetic_digits(2000, seed=0, split="test")
    model = cl.train(train.images, train.labels, cl.TrainConfig(batch_size=100, epochs=10, seed=0)).model
    assert cl.evaluate(model, test.images, test.labels).accuracy > 0.90
