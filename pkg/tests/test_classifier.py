import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from cpburn.change import BurnMask
from cpburn.classifier import (SETTINGS, PixelModel, TrainConfig, assemble_features, dice_loss_of,
                               gradient_check, predict, soft_dice_loss, split_patches,
                               tile_patches, train)
from cpburn.metrics import confusion, f1_iou
from cpburn.raster import RasterGrid

ALL = SETTINGS["all"]


def separable_scene(n=64, seed=0):
    """Two Gaussian classes split far apart along the first two channels."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[:n, :n]
    truth = (xx - n / 2) ** 2 + (yy - n / 2) ** 2 < (n / 4) ** 2
    sign = np.where(truth, 1.0, -1.0)
    planes = {
        "lr_ch": -0.4 * sign + 0.05 * rng.standard_normal((n, n)),
        "lr_cv": -0.3 * sign + 0.05 * rng.standard_normal((n, n)),
    }
    for name in ALL[2:]:
        planes[name] = rng.standard_normal((n, n))
    labels = BurnMask(truth, np.ones((n, n), bool), "synthetic_truth")
    return planes, labels


def logistic_oracle_accuracy(x, y):
    """Plain logistic regression by BFGS; training accuracy of the fitted plane."""
    xb = np.vstack([x, np.ones(x.shape[1])])

    def nll(w):
        z = w @ xb
        return np.sum(np.logaddexp(0, z) - y * z) + 1e-3 * w @ w

    w = minimize(nll, np.zeros(xb.shape[0]), method="BFGS").x
    return np.mean(((w @ xb) > 0) == (y > 0.5))


def test_separable_scene_oracle():
    planes, labels = separable_scene()
    stack = assemble_features(planes, "all")
    x = stack.data.reshape(6, -1)
    assert logistic_oracle_accuracy(x, labels.mask.ravel().astype(float)) == 1.0


def test_train_separable_reaches_low_dice_and_high_iou():
    planes, labels = separable_scene()
    stack = assemble_features(planes, "all")
    cfg = TrainConfig(learning_rate=0.05, epochs=150, patch_size=16, batch=8)
    res = train(PixelModel.initial(ALL, cfg.seed), stack, labels, cfg)
    assert dice_loss_of(res.model, stack, labels) < 0.05
    _, iou = f1_iou(confusion(predict(res.model, stack), labels))
    assert iou >= 0.95


def test_zero_learning_rate_keeps_weights():
    planes, labels = separable_scene(32)
    stack = assemble_features(planes, "all")
    model = PixelModel.initial(ALL, 5)
    res = train(model, stack, labels, TrainConfig(learning_rate=0.0, epochs=5, patch_size=8))
    np.testing.assert_array_equal(res.model.weights, model.weights)
    assert res.model.bias == model.bias


def test_training_is_deterministic():
    planes, labels = separable_scene(48)
    stack = assemble_features(planes, "all")
    cfg = TrainConfig(learning_rate=0.01, epochs=20, patch_size=12, batch=4)
    a = train(PixelModel.initial(ALL, 42), stack, labels, cfg)
    b = train(PixelModel.initial(ALL, 42), stack, labels, cfg)
    assert a.history == b.history
    assert a.model.weights.tobytes() == b.model.weights.tobytes()
    assert a.model.to_dict() == b.model.to_dict()


def test_best_validation_epoch_is_returned():
    planes, labels = separable_scene(48)
    stack = assemble_features(planes, "all")
    cfg = TrainConfig(learning_rate=0.02, epochs=30, patch_size=12, batch=4)
    res = train(PixelModel.initial(ALL, 1), stack, labels, cfg)
    val = [h["val_loss"] for h in res.history]
    assert res.best_epoch == int(np.argmin(val)) + 1
    assert res.n_val_patches == 2 and res.n_train_patches == 14
    assert res.label_provenance == "synthetic_truth"


def test_single_class_labels_warn():
    planes, labels = separable_scene(16)
    stack = assemble_features(planes, "all")
    empty = BurnMask(np.zeros((16, 16)), np.ones((16, 16), bool), "pseudo_label")
    with pytest.warns(RuntimeWarning, match="single class"):
        res = train(PixelModel.initial(ALL), stack, empty, TrainConfig(epochs=2, patch_size=8))
    assert all(np.isfinite(h["train_loss"]) for h in res.history)


def test_channel_mismatch_rejected():
    planes, labels = separable_scene(16)
    stack = assemble_features(planes, "logratio_only")
    with pytest.raises(ValueError, match="do not match"):
        predict(PixelModel.initial(ALL), stack)


# soft Dice

def test_soft_dice_examples():
    y = np.array([1, 1, 0, 0, 1], float)
    assert soft_dice_loss(y, y, smooth=1e-12)[0] == pytest.approx(0.0, abs=1e-12)
    assert soft_dice_loss(1 - y, y, smooth=1e-12)[0] == pytest.approx(1.0, abs=1e-12)
    pred = np.array([1, 1, 0, 0], float)
    lab = np.array([1, 0, 1, 0], float)  # TP=1, FP=1, FN=1
    assert soft_dice_loss(pred, lab, smooth=1e-12)[0] == pytest.approx(0.5, abs=1e-12)


def test_soft_dice_empty_valid_set():
    loss, grad = soft_dice_loss(np.ones(3), np.ones(3), valid=np.zeros(3, bool))
    assert loss == 0.0 and not grad.any()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=200))
def test_soft_dice_matches_hard_dice(pairs):
    p = np.array([a for a, _ in pairs], float)
    y = np.array([b for _, b in pairs], float)
    tp = np.sum((p == 1) & (y == 1))
    fp = np.sum((p == 1) & (y == 0))
    fn = np.sum((p == 0) & (y == 1))
    loss = soft_dice_loss(p, y, smooth=1e-9)[0]
    hard = 0.0 if tp + fp + fn == 0 else 1 - 2 * tp / (2 * tp + fp + fn)
    assert loss == pytest.approx(hard, abs=1e-8)
    assert 0 <= loss < 1 or hard == 1


def test_soft_dice_excludes_nodata():
    y = BurnMask(np.array([1, 0, 1]), np.array([True, True, False]), "synthetic_truth")
    a = soft_dice_loss(np.array([0.9, 0.2, 0.0]), y)
    b = soft_dice_loss(np.array([0.9, 0.2, 1.0]), y)
    assert a[0] == b[0] and a[1][2] == 0.0


def test_soft_dice_pred_gradient_by_differences(rng):
    p = rng.uniform(0.05, 0.95, 50)
    y = (rng.random(50) > 0.5).astype(float)
    _, grad = soft_dice_loss(p, y, smooth=0.7)
    h = 1e-6
    for i in range(0, 50, 7):
        e = np.zeros(50)
        e[i] = h
        fd = (soft_dice_loss(p + e, y, 0.7)[0] - soft_dice_loss(p - e, y, 0.7)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-10)


# gradient check

def random_instance(rng, n=24):
    planes = {name: rng.standard_normal((n, n)) for name in ALL}
    labels = BurnMask(rng.random((n, n)) > 0.6, rng.random((n, n)) > 0.05, "pseudo_label")
    model = PixelModel(rng.normal(0, 0.8, 6), rng.normal(0, 0.5), ALL)
    return model, assemble_features(planes, "all"), labels


def test_gradient_check_random(rng):
    for _ in range(5):
        rel, _ = gradient_check(*random_instance(rng))
        assert rel < 1e-4


def test_gradient_check_constant_prediction(rng):
    # saturated sigmoid: p == 1 everywhere, so both gradients vanish
    _, stack, labels = random_instance(rng)
    model = PixelModel(np.zeros(6), 40.0, ALL)
    _, abs_err = gradient_check(model, stack, labels)
    assert abs_err < 1e-8


def test_gradient_check_with_doubled_smooth(rng):
    model, stack, labels = random_instance(rng)
    x1 = gradient_check(model, stack, labels, smooth=1.0)[0]
    x2 = gradient_check(model, stack, labels, smooth=2.0)[0]
    assert dice_loss_of(model, stack, labels, 1.0) != dice_loss_of(model, stack, labels, 2.0)
    assert x1 < 1e-4 and x2 < 1e-4


# prediction

def test_predict_boundary_conventions():
    planes, _ = separable_scene(8)
    stack = assemble_features(planes, "all")
    zero = PixelModel(np.zeros(6), 0.0, ALL)
    assert predict(zero, stack).mask.all()
    neg = PixelModel(np.zeros(6), -10.0, ALL)
    out = predict(neg, stack)
    assert not out.mask.any() and out.provenance == "model_prediction"


# features

@pytest.mark.parametrize("setting,channels", [
    ("logratio_only", ["lr_ch", "lr_cv"]),
    ("decomp_cprvi", ["mchi_r", "mchi_g", "mchi_b", "cprvi"]),
    ("all", ["lr_ch", "lr_cv", "mchi_r", "mchi_g", "mchi_b", "cprvi"]),
])
def test_feature_settings(setting, channels, rng):
    planes = {name: rng.gamma(2.0, 3.0, (20, 20)) for name in ALL}
    stack = assemble_features(planes, setting)
    assert list(stack.channels) == channels
    for i in range(len(channels)):
        vals = stack.data[i][stack.valid]
        assert abs(vals.mean()) < 0.1 and 0.5 <= vals.std() <= 2


def test_features_from_named_rasters(rng):
    lr = RasterGrid(rng.normal(size=(2, 6, 6)), band_names=["lr_ch", "lr_cv"])
    valid = np.ones((6, 6), bool)
    valid[0, 0] = False
    cp = RasterGrid(rng.random((2, 6, 6)), valid, ["cprvi", "gd"])
    rgb = RasterGrid(rng.random((3, 6, 6)), band_names=["mchi_r", "mchi_g", "mchi_b"])
    stack = assemble_features([lr, rgb, cp], "all")
    assert not stack.valid[0, 0] and stack.valid.sum() == 35
    again = assemble_features([lr, rgb, cp], "all", stack.normalization)
    np.testing.assert_array_equal(again.data, stack.data)


def test_missing_source_rejected(rng):
    with pytest.raises(ValueError, match="cprvi"):
        assemble_features({"mchi_r": np.ones((2, 2)), "mchi_g": np.ones((2, 2)),
                           "mchi_b": np.ones((2, 2))}, "decomp_cprvi")
    with pytest.raises(ValueError):
        assemble_features({}, "bands_i_like")


# patches

@settings(max_examples=100, deadline=None)
@given(st.integers(1, 70), st.integers(1, 70), st.integers(1, 32))
def test_patches_tile_every_pixel_once(h, w, size):
    cover = np.zeros((h, w), int)
    for rs, cs in tile_patches((h, w), size):
        cover[rs, cs] += 1
    assert np.all(cover == 1)


def test_split_is_seeded_and_partitions():
    patches = tile_patches((100, 100), 10)
    a = split_patches(patches, 0.1, np.random.default_rng(42))
    b = split_patches(patches, 0.1, np.random.default_rng(42))
    assert a == b
    assert len(a[1]) == 10 and sorted(a[0] + a[1]) == sorted(patches)


def test_model_file_round_trip(tmp_path):
    m = PixelModel([0.1, -2.5], 0.3, ["lr_ch", "lr_cv"], 42, {"lr_ch": (0.0, 1.0), "lr_cv": (1.5, 2.0)},
                   {"learning_rate": 3e-4})
    m.save(tmp_path / "m.json")
    back = PixelModel.load(tmp_path / "m.json")
    assert back.to_dict() == m.to_dict()
