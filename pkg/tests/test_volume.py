import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iris import volume as vol


def test_volume_validation():
    with pytest.raises(ValueError):
        vol.Volume((1, 1, 1), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        vol.Volume((0, 1, 1), np.zeros((2, 2, 2)))
    v = vol.Volume((1, 1, 1), np.zeros((2, 3, 4), dtype=np.float32))
    assert v.data.dtype == np.float64
    assert v.dims == (2, 3, 4)


def test_mask_must_be_binary():
    with pytest.raises(ValueError):
        vol.Mask((1, 1, 1), np.full((2, 2, 2), 3, dtype=np.uint8))


def test_ivol_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    v = vol.Volume((1.0, 0.5, 2.0), rng.normal(size=(3, 4, 5)))
    m = vol.Mask((1.0, 0.5, 2.0), (rng.random((3, 4, 5)) < 0.4).astype(np.uint8))
    vp, mp = tmp_path / "v.ivol", tmp_path / "m.ivol"
    vol.save_volume(v, vp)
    vol.save_mask(m, mp)
    v2 = vol.load_volume(vp)
    m2 = vol.load_mask(mp)
    assert v2.spacing == v.spacing
    # storage is f32, so expect single precision agreement
    np.testing.assert_allclose(v2.data, v.data, atol=1e-6)
    np.testing.assert_array_equal(m2.labels, m.labels)


def test_ivol_bytes_roundtrip():
    v = vol.Volume((2.0, 1.0, 1.0), np.arange(24, dtype=np.float64).reshape(2, 3, 4))
    blob = vol.volume_to_bytes(v)
    v2 = vol.volume_from_bytes(blob)
    np.testing.assert_allclose(v2.data, v.data, atol=1e-6)
    assert blob.startswith(b"IVOL1 ")


def test_ivol_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ivol"
    p.write_bytes(b"not a volume at all\n")
    with pytest.raises(vol.VolumeFormatError):
        vol.load_volume(p)
    with pytest.raises(vol.VolumeFormatError):
        vol.volume_from_bytes(b"IVOL1 {\"dims\": [1,1,1]}\n")


def test_ivol_rejects_truncated_payload(tmp_path):
    v = vol.Volume((1, 1, 1), np.zeros((2, 2, 2)))
    blob = vol.volume_to_bytes(v)
    with pytest.raises(vol.VolumeFormatError):
        vol.volume_from_bytes(blob[:-4])


def test_normalize():
    rng = np.random.default_rng(1)
    v = vol.Volume((1, 1, 1), rng.normal(3.0, 2.0, size=(2, 8, 8)))
    n = vol.normalize(v)
    assert abs(n.data.mean()) < 1e-12
    assert abs(n.data.std() - 1.0) < 1e-12
    again = vol.normalize(n)
    np.testing.assert_allclose(again.data, n.data, atol=1e-12)


def test_normalize_constant_input():
    v = vol.Volume((1, 1, 1), np.full((2, 2, 2), 7.0))
    assert (vol.normalize(v).data == 0).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_generate_synthetic_contract(seed):
    spec = vol.SynthSpec(seed=seed, dims=(1, 24, 24))
    v, m = vol.generate_synthetic(spec)
    assert v.dims == m.dims == (1, 24, 24)
    frac = m.labels.mean()
    assert 0.01 <= frac <= 0.60
    # deterministic per seed
    v2, m2 = vol.generate_synthetic(spec)
    np.testing.assert_array_equal(m.labels, m2.labels)
    np.testing.assert_array_equal(v.data, v2.data)


def test_generate_synthetic_3d():
    v, m = vol.generate_synthetic(vol.SynthSpec(seed=3, dims=(12, 16, 16)))
    assert m.labels.any()
    assert v.dims == (12, 16, 16)


def test_augment_preserves_shape_and_binarity():
    v, m = vol.generate_synthetic(vol.SynthSpec(seed=9, dims=(8, 16, 16)))
    v2, m2 = vol.augment(v, m, seed=4)
    assert v2.dims == v.dims
    assert set(np.unique(m2.labels)) <= {0, 1}
    v3, m3 = vol.augment(v, m, seed=4)
    np.testing.assert_array_equal(m2.labels, m3.labels)


def test_augment_identity_when_trivial():
    v, m = vol.generate_synthetic(vol.SynthSpec(seed=2, dims=(4, 8, 8)))
    v2, m2 = vol.apply_augmentation(v, m, flips=(False, False, False), angles=(0, 0, 0))
    np.testing.assert_allclose(v2.data, v.data, atol=1e-12)
    np.testing.assert_array_equal(m2.labels, m.labels)


def test_augment_flip_only_matches_numpy_flip():
    v, m = vol.generate_synthetic(vol.SynthSpec(seed=5, dims=(1, 12, 12)))
    v2, m2 = vol.apply_augmentation(v, m, flips=(False, True, False), angles=(0, 0, 0))
    np.testing.assert_allclose(v2.data, np.flip(v.data, axis=1), atol=1e-12)
    np.testing.assert_array_equal(m2.labels, np.flip(m.labels, axis=1))


def test_depth_one_rotation_keeps_single_slice():
    # in-plane rotation only; the slab axis must not leak
    v, m = vol.generate_synthetic(vol.SynthSpec(seed=6, dims=(1, 16, 16)))
    v2, m2 = vol.apply_augmentation(v, m, flips=(False, False, False), angles=(0.3, 0.5, 0.5))
    assert v2.dims == (1, 16, 16)
    assert m2.labels.sum() > 0
