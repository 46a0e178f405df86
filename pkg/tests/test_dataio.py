import struct

import numpy as np
import pytest

from dataio.checkpoint import (Checkpoint, CheckpointError, CheckpointVersionError, CorruptCheckpointError,
                               DuplicateTensorError, TruncatedCheckpointError, decode_checkpoint,
                               encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint)
from dataio.codecs import ImageBuffer, ImageCodecError, load_tensor, read_image, save_tensor
from dataio.datasets import (CalibrationError, DatasetError, ImageDataset, PatchSampler, augment,
                             crop_to_multiple, degrade, open_dataset, sample_calibration)
from dataio.models import RunManifest
from dataio.synthetic import GENERATORS, SyntheticDatasetSpec
from quant.quantizer import QuantizationError
from quant.sites import FakeQuantizer, MeasureType, QuantMode, SiteKind


def grid_image(rng, h=6, w=5):
    """Ảnh có giá trị nằm đúng trên lưới k/255"""
    return (rng.integers(0, 256, size=(3, h, w)) / 255.0).astype(np.float32)


def constant_images(values, size=8):
    return [np.full((3, size, size), v, dtype=np.float32) for v in values]


# ==================================================
# CODECS
# ==================================================
@pytest.mark.parametrize("suffix", ['.ppm', '.png'])
def test_tensor_file_round_trip(tmp_path, rng, suffix):
    image = grid_image(rng)
    path = tmp_path / f"a{suffix}"
    save_tensor(image, path)
    back = load_tensor(path)
    assert back.dtype == np.float32 and back.shape == (3, 6, 5)
    np.testing.assert_allclose(back, image, atol=1e-6)
    assert read_image(path).width == 5


def test_from_tensor_rounds_and_clips():
    image = np.zeros((3, 1, 3))
    image[0] = [-0.1, 0.5, 1.2]
    samples = ImageBuffer.from_tensor(image).samples
    assert samples[0, :, 0].tolist() == [0, 128, 255]


def test_image_buffer_validation():
    with pytest.raises(ImageCodecError):
        ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
    with pytest.raises(ImageCodecError):
        ImageBuffer(np.zeros((4, 4, 3), dtype=np.float32))
    with pytest.raises(ImageCodecError):
        ImageBuffer.from_tensor(np.zeros((1, 4, 4)))


def test_codec_errors(tmp_path):
    with pytest.raises(ImageCodecError):
        read_image(tmp_path / "missing.png")
    with pytest.raises(ImageCodecError):
        save_tensor(np.zeros((3, 2, 2)), tmp_path / "a.jpg")
    broken = tmp_path / "broken.ppm"
    broken.write_bytes(b"not an image")
    with pytest.raises(ImageCodecError):
        read_image(broken)


# ==================================================
# SYNTHETIC DATA
# ==================================================
def test_synthetic_is_deterministic():
    a = SyntheticDatasetSpec(seed=5, count=5, size=24).generate()
    b = SyntheticDatasetSpec(seed=5, count=5, size=24).generate()
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    other = SyntheticDatasetSpec(seed=6, count=5, size=24).generate()
    assert any(not np.array_equal(x, y) for x, y in zip(a, other))


def test_synthetic_images_are_valid():
    spec = SyntheticDatasetSpec(seed=0, count=len(GENERATORS), size=20)
    for i, image in enumerate(spec.generate()):
        assert image.shape == (3, 20, 20) and image.dtype == np.float32
        assert image.min() >= 0.0 and image.max() <= 1.0
        assert spec.generator_of(i) == GENERATORS[i]
    assert spec.generator_of(len(GENERATORS)) == GENERATORS[0]


def test_synthetic_image_does_not_depend_on_count():
    short = SyntheticDatasetSpec(seed=2, count=2, size=16).generate()
    long = SyntheticDatasetSpec(seed=2, count=4, size=16).generate()
    np.testing.assert_array_equal(short[1], long[1])


@pytest.mark.parametrize("kwargs", [{'mix': ('plasma',)}, {'mix': ()}, {'count': 0}, {'size': 0}])
def test_synthetic_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticDatasetSpec(**kwargs)


# ==================================================
# DATASETS
# ==================================================
def test_crop_and_degrade_shapes(rng):
    hr = rng.uniform(0, 1, size=(3, 17, 19))
    assert crop_to_multiple(hr, 2).shape == (3, 16, 18)
    assert degrade(hr, 2).shape == (3, 8, 9)
    np.testing.assert_allclose(degrade(np.full((3, 8, 8), 0.4), 4), 0.4, atol=1e-12)


def test_dataset_from_directory(image_dir):
    (image_dir / "notes.txt").write_text("skip me")
    dataset = ImageDataset.from_directory(image_dir)
    assert len(dataset) == 2
    assert dataset.names == ['img0', 'img1']
    expected = SyntheticDatasetSpec(seed=3, count=2, size=32).generate()
    for got, want in zip(dataset, expected):
        np.testing.assert_allclose(got, want, atol=0.5 / 255 + 1e-6)


def test_dataset_parallel_read_matches_serial(image_dir):
    serial = ImageDataset.from_directory(image_dir)
    parallel = ImageDataset.from_directory(image_dir, max_workers=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a, b)


def test_missing_directory(tmp_path):
    with pytest.raises(DatasetError):
        ImageDataset.from_directory(tmp_path / "nope")


def test_open_dataset_sources(image_dir):
    mixed = open_dataset('synthetic', seed=1, count=3, size=16)
    assert mixed.names == ['checkerboard0000', 'grating0001', 'blobs0002']
    hf = open_dataset('synthetic-hf', seed=1, count=2, size=16)
    assert hf.names == ['grating0000', 'grating0001']
    assert len(open_dataset(str(image_dir))) == 2


def test_default_names():
    assert ImageDataset(images=constant_images([0.1, 0.2])).names == ['img0000', 'img0001']


# ==================================================
# CALIBRATION
# ==================================================
def test_calibration_requires_positive_count():
    with pytest.raises(CalibrationError):
        sample_calibration(constant_images([0.5]), n=0, patch=2, scale=2)


def test_calibration_rejects_small_images():
    with pytest.raises(CalibrationError):
        sample_calibration(constant_images([0.5], size=8), n=2, patch=8, scale=2)


def test_calibration_is_deterministic(rng):
    dataset = [rng.uniform(0, 1, size=(3, 32, 32)).astype(np.float32) for _ in range(3)]
    a = sample_calibration(dataset, n=5, patch=6, seed=9, scale=2)
    b = sample_calibration(dataset, n=5, patch=6, seed=9, scale=2)
    assert a.patch_ids == b.patch_ids
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert a[0].shape == (3, 6, 6)


def test_calibration_uses_each_image_once():
    values = [i / 100.0 for i in range(100)]
    calib = sample_calibration(constant_images(values), n=100, patch=2, scale=2)
    assert len(calib) == 100
    assert [pid[0] for pid in calib.patch_ids] == list(range(100))
    for patch, value in zip(calib, values):
        np.testing.assert_allclose(patch, value, atol=1e-6)


def test_calibration_cycles_and_skips_small_images():
    dataset = constant_images([0.1, 0.2]) + constant_images([0.3], size=2)
    calib = sample_calibration(dataset, n=5, patch=2, scale=2)
    assert [pid[0] for pid in calib.patch_ids] == [0, 1, 0, 1, 0]


# ==================================================
# TRAINING PATCHES
# ==================================================
def test_patch_sampler_shapes_and_pairing():
    dataset = SyntheticDatasetSpec(seed=0, count=3, size=24).generate()
    sampler = PatchSampler(dataset, scale=2, patch=4, batch=2, seed=1)
    lr, hr = sampler.sample(0)
    assert lr.shape == (2, 3, 4, 4) and hr.shape == (2, 3, 8, 8)
    assert lr.dtype == np.float32 and hr.dtype == np.float32
    np.testing.assert_array_equal(lr, degrade(hr, 2).astype(np.float32))


def test_patch_sampler_is_deterministic():
    dataset = SyntheticDatasetSpec(seed=0, count=3, size=24).generate()
    a = PatchSampler(dataset, scale=2, patch=4, batch=2, seed=1)
    b = PatchSampler(dataset, scale=2, patch=4, batch=2, seed=1)
    np.testing.assert_array_equal(a.sample(3)[1], b.sample(3)[1])
    np.testing.assert_array_equal(a.sample(3)[1], a.sample(3)[1])


def test_patch_sampler_needs_large_images():
    with pytest.raises(DatasetError):
        PatchSampler(constant_images([0.5], size=6), scale=2, patch=4, batch=1)


def test_augment_keeps_pixels(rng):
    image = rng.uniform(0, 1, size=(3, 5, 5))
    out = augment(image, np.random.default_rng(0))
    assert out.shape == image.shape
    np.testing.assert_allclose(np.sort(out.ravel()), np.sort(image.ravel()))


# ==================================================
# CHECKPOINTS
# ==================================================
def test_checkpoint_round_trip(tmp_path, tiny_model, lr_batch):
    path = tmp_path / "model.crft"
    save_checkpoint(tiny_model, path)
    assert not (tmp_path / "model.crft.tmp").exists()
    loaded = load_checkpoint(path)
    assert loaded.config == tiny_model.config
    assert loaded.quantizer is None
    for name, value in tiny_model.state_dict().items():
        np.testing.assert_array_equal(loaded.state_dict()[name], value)
    np.testing.assert_array_equal(loaded(lr_batch), tiny_model(lr_batch))


def test_checkpoint_keeps_quant_sites(tmp_path, tiny_model):
    quantizer = FakeQuantizer(bits=4, io_bits=8, per_channel_weights=True)
    quantizer.register('input', SiteKind.ACTIVATION, 0.0, 1.0)
    quantizer.register('shallow.weight', SiteKind.WEIGHT, -np.ones(8), np.ones(8))
    path = tmp_path / "q.crft"
    save_checkpoint(tiny_model, path, quantizer)

    loaded = load_checkpoint(path)
    q = loaded.quantizer
    assert q.mode is QuantMode.QUANTIZE
    assert (q.bits, q.io_bits, q.per_channel_weights) == (4, 8, True)
    assert list(q.sites) == ['input', 'shallow.weight']
    assert q.sites['input'].measure is MeasureType.FGO
    np.testing.assert_array_equal(q.sites['shallow.weight'].u, np.ones(8))
    assert read_checkpoint(path).config['quant.bits'] == '4'


def test_checkpoint_bytes_layout():
    data = encode_checkpoint(Checkpoint(config={'channels': '8'},
                                        tensors={'w': np.arange(6, dtype=np.float32).reshape(2, 3)}))
    assert data[:4] == b"CRFT"
    assert struct.unpack('<I', data[4:8])[0] == 1
    back = decode_checkpoint(data)
    assert back.config == {'channels': '8'}
    np.testing.assert_array_equal(back.tensors['w'], np.arange(6).reshape(2, 3))
    assert back.sites == []


def test_truncated_checkpoint(tmp_path, tiny_model):
    path = tmp_path / "m.crft"
    save_checkpoint(tiny_model, path)
    data = path.read_bytes()
    for cut in (3, 10, len(data) // 2, len(data) - 1):
        with pytest.raises(TruncatedCheckpointError):
            decode_checkpoint(data[:cut])


def test_bad_magic_and_trailing_bytes():
    data = encode_checkpoint(Checkpoint(config={}))
    with pytest.raises(CorruptCheckpointError):
        decode_checkpoint(b"XXXX" + data[4:])
    with pytest.raises(CorruptCheckpointError):
        decode_checkpoint(data + b"\x00")


def test_unsupported_version():
    data = encode_checkpoint(Checkpoint(config={}))
    with pytest.raises(CheckpointVersionError):
        decode_checkpoint(data[:4] + struct.pack('<I', 2) + data[8:])


def test_unknown_config_key():
    with pytest.raises(CheckpointVersionError):
        decode_checkpoint(encode_checkpoint(Checkpoint(config={'colour': 'blue'})))


def test_duplicate_tensor_name():
    tensors = {'a': np.zeros(2, dtype=np.float32), 'b': np.zeros(2, dtype=np.float32)}
    data = encode_checkpoint(Checkpoint(config={}, tensors=tensors))
    data = data.replace(struct.pack('<I', 1) + b'b', struct.pack('<I', 1) + b'a')
    with pytest.raises(DuplicateTensorError):
        decode_checkpoint(data)


def test_tensor_shape_mismatch_is_corrupt(tmp_path, tiny_model):
    path = tmp_path / "m.crft"
    save_checkpoint(tiny_model, path)
    ckpt = read_checkpoint(path)
    name = next(iter(ckpt.tensors))
    ckpt.tensors[name] = np.zeros((1,), dtype=np.float32)
    path.write_bytes(encode_checkpoint(ckpt))
    with pytest.raises(CorruptCheckpointError):
        load_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "none.crft")


def test_checkpoint_error_hierarchy():
    assert issubclass(TruncatedCheckpointError, CheckpointError)
    assert not issubclass(QuantizationError, CheckpointError)


# ==================================================
# RUN MANIFEST
# ==================================================
def test_manifest_written_next_to_output(tmp_path):
    output = tmp_path / "curve.csv"
    manifest = RunManifest('freq-drop', flags={'scale': 2, 'gammas': [0.0, 0.5], 'model': None},
                           seed=7, git_describe='abc123', wall_time=1.23456)
    path = manifest.write(output)
    assert path.name == "curve.csv.manifest"
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    text = raw.decode('utf-8')
    assert "flag.gammas=0.0,0.5\n" in text
    assert "flag.model=\n" in text
    assert "wall_time=1.235\n" in text

    back = RunManifest.read(path)
    assert back.command == 'freq-drop'
    assert back.seed == 7
    assert back.git_describe == 'abc123'
    assert back.flags['scale'] == '2'


def test_manifest_flags_sorted():
    keys = list(RunManifest('eval', flags={'b': 1, 'a': 2}).to_dict())
    assert keys.index('flag.a') < keys.index('flag.b')
