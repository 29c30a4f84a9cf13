import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nlcsnet import CSReconstructor
from nlcsnet.autograd import DimensionError
from nlcsnet.validation import check_image, check_images, check_rate

SMALL = dict(block_size=8, rate=0.25, epochs=1, iterations_per_epoch=2, batch_size=2, patch_size=16)


@pytest.fixture
def images(rng):
    return rng.random((3, 24, 24))


def test_get_params_and_clone():
    est = CSReconstructor(rate=0.2, enable_msn=False)
    params = est.get_params()
    assert params["rate"] == 0.2 and params["enable_msn"] is False
    twin = clone(est)
    assert twin.get_params() == params and twin is not est


def test_fit_transform_predict(images):
    est = CSReconstructor(**SMALL).fit(images)
    assert est.n_measurements_ == 16 and len(est.loss_log_) == 2
    ys = est.transform(images[:2])
    assert [y.shape for y in ys] == [(16, 3, 3)] * 2
    back = est.inverse_transform(ys)
    assert back[0].shape == (24, 24)
    preds = est.predict([images[0], images[1, :19, :21]])
    assert preds[1].shape == (19, 21)
    np.testing.assert_array_equal(est.inverse_transform(est.transform(images[:1]))[0], preds[0])
    assert np.isfinite(est.score(images))


def test_fit_is_deterministic(images):
    a = CSReconstructor(**SMALL, random_state=4).fit(images)
    b = CSReconstructor(**SMALL, random_state=4).fit(images)
    assert a.loss_log_ == b.loss_log_


def test_unfitted_estimator_raises(images):
    with pytest.raises(NotFittedError):
        CSReconstructor().predict(images)


def test_from_checkpoint_restores_predictions(images):
    est = CSReconstructor(**SMALL).fit(images)
    again = CSReconstructor.from_checkpoint(est.checkpoint_)
    assert again.get_params()["rate"] == 0.25
    np.testing.assert_array_equal(again.predict(images[:1])[0], est.predict(images[:1])[0])


def test_input_validation():
    assert check_image(np.full((2, 2), 255, np.uint8)).max() == 1.0
    with pytest.raises(DimensionError):
        check_image(np.zeros((2, 2, 3)))
    with pytest.raises(ValueError):
        check_image(np.array([[0.0, 1.5]]))
    with pytest.raises(ValueError):
        check_image(np.array([[np.nan]]))
    assert len(check_images(np.zeros((4, 4)))) == 1
    with pytest.raises(ValueError):
        check_images([])
    with pytest.raises(ValueError):
        check_rate(0)
    with pytest.raises(ValueError):
        CSReconstructor(rate=2.0).fit(np.zeros((1, 64, 64)))
