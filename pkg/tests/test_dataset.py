import numpy as np
import pytest

from gaborcnn.dataset import (
    CropLargerThanImage,
    DatasetConfig,
    EmptyDataset,
    InvalidConfig,
    SplitSpec,
    TooSmall,
    UnknownDistance,
    ViewCondition,
    augment_train,
    batch_iter,
    crop_side,
    eval_transform,
    generate_dataset,
    load_dataset,
    render_view,
    save_dataset,
    split_by_distance,
)
from gaborcnn.imgio import GrayImage, resize_bilinear


@pytest.fixture(scope="module")
def small():
    return generate_dataset(DatasetConfig.desk(n_objects=2, n_angles=4, size=24), seed=3)


def silhouette_extent(img):
    ys, xs = np.nonzero(img.data > 0.19)
    return xs.max() - xs.min() + 1, ys.max() - ys.min() + 1


def test_render_is_deterministic():
    c = ViewCondition(1, 47.0, 16.0, 30.0)
    assert render_view(c, 32, 7) == render_view(c, 32, 7)
    assert render_view(c, 32, 7) != render_view(c, 32, 8)


def test_angle_is_periodic():
    assert ViewCondition(0, 47.0, 16.0, 360.0).angle == 0.0
    assert render_view(ViewCondition(0, 47.0, 16.0, 360.0), 32, 1) == render_view(
        ViewCondition(0, 47.0, 16.0, 0.0), 32, 1
    )


@pytest.mark.parametrize("obj", range(10))
def test_doubling_distance_halves_extent(obj):
    near = silhouette_extent(render_view(ViewCondition(obj, 39.5, 22.0, 0.0), 64, 0))
    far = silhouette_extent(render_view(ViewCondition(obj, 79.0, 22.0, 0.0), 64, 0))
    for n, f in zip(near, far):
        assert abs(f - n / 2) <= 1.0


def test_extent_decreases_with_distance():
    widths = [silhouette_extent(render_view(ViewCondition(2, d, 22.0, 0.0), 64, 0))[0]
              for d in (39.5, 47.0, 54.5, 62.0)]
    assert widths == sorted(widths, reverse=True) and len(set(widths)) == 4


def test_render_too_small():
    with pytest.raises(TooSmall):
        render_view(ViewCondition(0, 40.0, 22.0, 0.0), 8, 0)


def test_rendered_values_are_8bit_levels():
    img = render_view(ViewCondition(3, 54.5, 28.0, 45.0), (40, 30), 0)
    assert (img.width, img.height) == (40, 30)
    np.testing.assert_array_equal(np.round(img.data * 255) / 255, img.data)


def test_standard_config_counts():
    cfg = DatasetConfig()
    assert cfg.size == 8400
    assert cfg.n_angles == 42 == 8400 // (10 * 4 * 5)
    assert len(cfg.conditions()) == 8400


def test_desk_config_counts():
    assert DatasetConfig.desk().size == 576
    ds = generate_dataset(DatasetConfig(n_objects=1, distances=(40.0,), heights=(22.0,), n_angles=1,
                                        width=16, height=16), 0)
    assert len(ds) == 1


def test_invalid_config():
    with pytest.raises(InvalidConfig):
        DatasetConfig(n_objects=0)
    with pytest.raises(InvalidConfig):
        DatasetConfig(distances=(40.0, 40.0))


def test_generation_is_reproducible(small):
    again = generate_dataset(DatasetConfig.desk(n_objects=2, n_angles=4, size=24), seed=3)
    assert all(small.images[c] == again.images[c] for c in small.images)


def test_split_partitions(small):
    train, test = split_by_distance(small, SplitSpec.for_dataset(small, 47.0))
    assert len(train) == 2 * 2 * 4
    assert len(train) + len(test) == len(small)
    assert {s.cond for s in train}.isdisjoint({s.cond for s in test})
    assert all(s.cond.distance == 47.0 for s in train)


def test_split_arithmetic():
    cfg = DatasetConfig()
    train = [c for c in cfg.conditions() if c.distance == 54.5]
    assert (len(train), cfg.size - len(train)) == (2100, 6300)


def test_split_errors(small):
    with pytest.raises(UnknownDistance):
        split_by_distance(small, SplitSpec(50.0, (39.5, 47.0, 54.5)))
    with pytest.raises(ValueError):
        SplitSpec(47.0, (47.0,))


def test_single_distance_warns():
    ds = generate_dataset(DatasetConfig(n_objects=1, distances=(40.0,), heights=(22.0,), n_angles=2,
                                        width=16, height=16), 0)
    with pytest.warns(UserWarning):
        train, test = split_by_distance(ds, SplitSpec(40.0))
    assert len(train) == 2 and test == []


def test_save_load_round_trip(small, tmp_path):
    save_dataset(small, tmp_path)
    back = load_dataset(tmp_path)
    assert back.distances == small.distances and back.heights == small.heights
    assert set(back.images) == set(small.images)
    assert all(back.images[c] == small.images[c] for c in small.images)
    header = (tmp_path / "manifest.csv").read_text().splitlines()[0]
    assert header == "object_id,distance,height,angle,path"


def test_crop_side_geometry():
    assert crop_side(160, 120) == 110
    assert crop_side(48, 48) == 44


def test_augment_crop_geometry():
    img = GrayImage(np.random.default_rng(0).random((120, 160)))
    out = augment_train(img, np.random.default_rng(1), 224)
    assert (out.width, out.height) == (224, 224)


def test_augment_desk_geometry():
    img = GrayImage(np.random.default_rng(0).random((48, 48)))
    out = augment_train(img, np.random.default_rng(1), 32)
    assert (out.width, out.height) == (32, 32)


def test_augment_degenerate_is_resize():
    img = GrayImage(np.random.default_rng(0).random((40, 40)))
    out = augment_train(img, np.random.default_rng(1), 24, flip=False, side=40, offset=(0, 0))
    assert out == resize_bilinear(img, 24, 24)


def test_augment_replays_its_draws():
    img = GrayImage(np.random.default_rng(0).random((30, 36)))
    flips = set()
    for seed in range(12):
        rng = np.random.default_rng(seed)
        out = augment_train(img, rng, 16)
        replay = np.random.default_rng(seed)
        flip = bool(replay.random() < 0.5)
        x0, y0 = int(replay.integers(0, 36 - 28 + 1)), int(replay.integers(0, 30 - 28 + 1))
        src = img.data[:, ::-1] if flip else img.data
        assert out == resize_bilinear(GrayImage(src[y0 : y0 + 28, x0 : x0 + 28]), 16, 16)
        flips.add(flip)
    assert flips == {True, False}


def test_augment_crop_too_large():
    with pytest.raises(CropLargerThanImage):
        augment_train(GrayImage(np.zeros((20, 20))), np.random.default_rng(0), 16, side=21)


def test_eval_transform():
    img = GrayImage(np.random.default_rng(0).random((120, 160)))
    out = eval_transform(img, 224)
    assert (out.width, out.height) == (224, 224)
    assert out == eval_transform(img, 224)
    expected = resize_bilinear(GrayImage(img.data[:, 20:140]), 224, 224)
    assert out == expected
    sq = GrayImage(np.random.default_rng(1).random((30, 30)))
    assert eval_transform(sq, 20) == resize_bilinear(sq, 20, 20)


def _fake_samples(n):
    from gaborcnn.dataset import Sample

    img = GrayImage(np.zeros((2, 2)))
    return [Sample(ViewCondition(i % 3, 40.0, 22.0, float(i)), img) for i in range(n)]


def test_batch_sizes_and_partition():
    samples = _fake_samples(130)
    batches = list(batch_iter(samples, 64, np.random.default_rng(0)))
    assert [len(y) for _, y in batches] == [64, 64, 2]
    assert batches[0][0].shape == (64, 1, 2, 2)


def test_batch_order_is_seeded_and_reshuffles():
    samples = _fake_samples(50)

    def labels(seed, epochs=2):
        rng = np.random.default_rng(seed)
        return [np.concatenate([y for _, y in batch_iter(samples, 8, rng)]) for _ in range(epochs)]

    a, b = labels(4), labels(4)
    assert all((x == y).all() for x, y in zip(a, b))
    assert not (a[0] == a[1]).all()


def test_every_sample_once_per_epoch():
    from gaborcnn.dataset import Sample

    samples = [Sample(ViewCondition(i, 40.0, 22.0, 0.0), GrayImage(np.zeros((2, 2)))) for i in range(37)]
    seen = np.concatenate([y for _, y in batch_iter(samples, 10, np.random.default_rng(2))])
    assert sorted(seen.tolist()) == list(range(37))


def test_batch_iter_empty():
    with pytest.raises(EmptyDataset):
        batch_iter([], 4, np.random.default_rng(0))
