import numpy as np
import pytest

from iris import distfield, interaction, supervoxel
from iris.volume import Volume


def grid_labeling(dims, k):
    img = np.random.default_rng(0).normal(size=dims)
    return supervoxel.slic(img, k, supervoxel.SlicConfig())


def test_click_wire_roundtrip():
    c = interaction.Click((1, 2, 3), interaction.OBJECT)
    assert interaction.Click.from_wire(c.to_wire()) == c
    with pytest.raises(ValueError):
        interaction.Click.from_wire({"pos": [0, 0, 0], "polarity": "maybe"})


def test_robot_clicks_target_largest_error_regions():
    dims = (1, 8, 8)
    gt = np.zeros(dims, dtype=np.uint8)
    gt[0, :, 4:] = 1
    # split the grid into two halves so the error is confined to one region
    img = np.zeros(dims)
    img[0, :, 4:] = 10.0
    labeling = supervoxel.slic(img, 2, supervoxel.SlicConfig())
    pred = np.zeros(dims, dtype=np.uint8)  # misses the whole right half
    cfg = interaction.RobotConfig(clicks_per_iteration=2, noise_range=0)
    clicks = interaction.simulate_clicks(pred, gt, labeling, cfg, np.random.default_rng(0))
    # only one region has errors, so only one click comes back
    assert len(clicks) == 1
    z, y, x = clicks[0].pos
    assert x >= 4
    assert clicks[0].polarity == interaction.OBJECT  # false negatives dominate


def test_robot_clicks_background_polarity():
    dims = (1, 6, 6)
    gt = np.zeros(dims, dtype=np.uint8)
    pred = np.ones(dims, dtype=np.uint8)  # everything falsely foreground
    labeling = grid_labeling(dims, 4)
    cfg = interaction.RobotConfig(clicks_per_iteration=1)
    clicks = interaction.simulate_clicks(pred, gt, labeling, cfg, np.random.default_rng(1))
    assert clicks[0].polarity == interaction.BACKGROUND


def test_robot_no_errors_no_clicks():
    dims = (1, 6, 6)
    gt = (np.random.default_rng(2).random(dims) < 0.5).astype(np.uint8)
    labeling = grid_labeling(dims, 4)
    cfg = interaction.RobotConfig(clicks_per_iteration=6)
    clicks = interaction.simulate_clicks(gt, gt, labeling, cfg, np.random.default_rng(0))
    assert clicks == []


def test_robot_clicks_deterministic_and_in_grid_with_noise():
    dims = (1, 16, 16)
    rng = np.random.default_rng(3)
    gt = (rng.random(dims) < 0.4).astype(np.uint8)
    pred = np.zeros(dims, dtype=np.uint8)
    labeling = grid_labeling(dims, 10)
    cfg = interaction.RobotConfig(clicks_per_iteration=6, noise_range=7)
    a = interaction.simulate_clicks(pred, gt, labeling, cfg, np.random.default_rng(11))
    b = interaction.simulate_clicks(pred, gt, labeling, cfg, np.random.default_rng(11))
    assert a == b
    for c in a:
        for coord, d in zip(c.pos, dims):
            assert 0 <= coord < d


def test_random_clicks_shape():
    clicks = interaction.random_clicks((2, 5, 5), 4, np.random.default_rng(0))
    assert len(clicks) == 4
    for c in clicks:
        assert c.polarity in (interaction.OBJECT, interaction.BACKGROUND)


def test_expand_clicks_supervoxel_vs_point():
    dims = (1, 8, 8)
    labeling = grid_labeling(dims, 4)
    click = interaction.Click((0, 1, 1), interaction.OBJECT)
    sv_hints = interaction.expand_clicks([click], labeling, interaction.HintSet())
    pt_hints = interaction.expand_clicks([click], labeling, interaction.HintSet(), "point")
    voxel = int(np.ravel_multi_index(click.pos, dims))
    assert pt_hints.object_hints == {voxel}
    assert sv_hints.object_hints == supervoxel.region_of(labeling, voxel)
    assert len(sv_hints.object_hints) > 1


def test_expand_clicks_first_polarity_wins():
    dims = (1, 8, 8)
    labeling = grid_labeling(dims, 4)
    c1 = interaction.Click((0, 1, 1), interaction.OBJECT)
    hints = interaction.expand_clicks([c1], labeling, interaction.HintSet())
    c2 = interaction.Click((0, 1, 1), interaction.BACKGROUND)
    hints2 = interaction.expand_clicks([c2], labeling, hints)
    assert hints2.object_hints == hints.object_hints
    assert hints2.background_hints == set()
    # the original set is untouched (copy semantics)
    assert hints.background_hints == set()


def test_expand_clicks_out_of_grid():
    labeling = grid_labeling((1, 4, 4), 2)
    with pytest.raises(IndexError):
        interaction.expand_clicks(
            [interaction.Click((0, 4, 0), interaction.OBJECT)], labeling, interaction.HintSet()
        )


def test_build_maps_scaling_and_empty():
    dims = (1, 8, 8)
    v = Volume((1, 1, 1), np.random.default_rng(5).normal(size=dims))
    hints = interaction.HintSet(object_hints={3, 9})
    h_plus, h_minus = interaction.build_maps(v, hints, distfield.Euclidean())
    assert h_plus.max() == 1.0
    assert h_plus.ravel()[3] == 0.0
    assert (h_minus == 0).all()  # no background hints
    assert h_plus.min() >= 0.0


def test_build_maps_all_seeds_zero_field():
    dims = (1, 2, 2)
    v = Volume((1, 1, 1), np.zeros(dims))
    hints = interaction.HintSet(object_hints={0, 1, 2, 3})
    h_plus, _ = interaction.build_maps(v, hints, distfield.Euclidean())
    assert (h_plus == 0).all()  # zero max stays zero, no division blowup
