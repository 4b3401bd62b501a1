import numpy as np
import pytest

from incx.detectors import Detector, LoggedDetector, make_detection, make_topk_pixel_detector
from incx.drise import MaskSpec, detection_similarity, drise_saliency, generate_masks
from incx.errors import InvalidSpec, ZeroMass
from incx.geometry import BBox
from incx.images import Image
from incx.metrics import epg


def test_masks_all_ones_when_p_is_one():
    masks = generate_masks(MaskSpec(n_masks=4, grid=(3, 3), p=1.0, seed=1), 16, 16)
    assert np.all(masks == 1.0)


def test_masks_all_zero_when_p_is_zero():
    masks = generate_masks(MaskSpec(n_masks=4, grid=(3, 3), p=0.0, seed=1), 16, 16)
    assert np.all(masks == 0.0)


def test_masks_values_in_unit_interval():
    masks = generate_masks(MaskSpec(n_masks=50, grid=(4, 4), p=0.5, seed=3), 20, 24)
    assert masks.shape == (50, 24, 20)
    assert masks.min() >= 0.0 and masks.max() <= 1.0


def test_masks_grand_mean_near_p():
    masks = generate_masks(MaskSpec(n_masks=2000, grid=(4, 4), p=0.5, seed=11),
                           16, 16)
    assert abs(float(masks.mean()) - 0.5) <= 0.02


def test_masks_deterministic_given_seed():
    spec = MaskSpec(n_masks=10, grid=(4, 4), p=0.5, seed=42)
    a = generate_masks(spec, 16, 16)
    b = generate_masks(spec, 16, 16)
    assert np.array_equal(a, b)
    c = generate_masks(MaskSpec(n_masks=10, grid=(4, 4), p=0.5, seed=43), 16, 16)
    assert not np.array_equal(a, c)


def test_mask_spec_validation():
    with pytest.raises(InvalidSpec):
        MaskSpec(n_masks=0).validate()
    with pytest.raises(InvalidSpec):
        MaskSpec(grid=(0, 4)).validate()
    with pytest.raises(InvalidSpec):
        MaskSpec(p=1.5).validate()


# -- detection similarity ---------------------------------------------------------

def target_detection():
    return make_detection(BBox(2, 2, 6, 6), 0.9, [0.1, 0.8, 0.05, 0.05])


def test_similarity_exact_copy_scores_one():
    target = target_detection()
    copy = make_detection(target.bbox, 1.0, target.class_probs.copy())
    assert detection_similarity(target, [copy]) == pytest.approx(1.0, abs=1e-12)


def test_similarity_empty_proposals():
    assert detection_similarity(target_detection(), []) == 0.0


def test_similarity_component_product():
    # IoU 1/7, identical probs, objectness 0.7 -> exactly 0.1
    target = make_detection(BBox(0, 0, 2, 2), 1.0, [0.2, 0.8])
    prop = make_detection(BBox(1, 1, 3, 3), 0.7, [0.2, 0.8])
    assert detection_similarity(target, [prop]) == pytest.approx(0.1, abs=1e-12)


def test_similarity_takes_max_over_proposals():
    target = target_detection()
    weak = make_detection(BBox(0, 0, 8, 8), 0.2, target.class_probs.copy())
    strong = make_detection(target.bbox, 0.9, target.class_probs.copy())
    score = detection_similarity(target, [weak, strong])
    assert score == pytest.approx(0.9, abs=1e-12)


def test_similarity_skips_mismatched_vocabularies():
    target = make_detection(BBox(0, 0, 2, 2), 1.0, [0.2, 0.8])
    prop = make_detection(BBox(0, 0, 2, 2), 1.0, [0.2, 0.6, 0.2])
    assert detection_similarity(target, [prop]) == 0.0


# -- saliency bootstrap -------------------------------------------------------------

class AlwaysTarget(Detector):
    """Returns the target detection regardless of input."""

    def __init__(self, target):
        self.target = target

    def detect(self, img):
        return [self.target]


def test_drise_always_firing_detector_epg_matches_area_fraction():
    w = h = 32
    img = Image(np.full((h, w, 3), 128, dtype=np.uint8))
    target = make_detection(BBox(8, 8, 24, 24), 1.0, [0.1, 0.8, 0.05, 0.05])
    field = drise_saliency(img, target, AlwaysTarget(target),
                           MaskSpec(n_masks=400, grid=(4, 4), p=0.5, seed=5))
    area_fraction = target.bbox.area / (w * h)
    assert abs(epg(field, target.bbox) - area_fraction) <= 0.05


def test_drise_single_full_mask_gives_uniform_field():
    img = Image(np.full((8, 8, 3), 40, dtype=np.uint8))
    target = make_detection(BBox(1, 1, 5, 5), 1.0, [0.9, 0.1])
    field = drise_saliency(img, target, AlwaysTarget(target),
                           MaskSpec(n_masks=1, grid=(2, 2), p=1.0, seed=0))
    assert np.allclose(field.values, 1.0 / 64.0)


def test_drise_concentrates_on_designated_region(rng):
    w = h = 32
    # dim pixels so that fractional mask values below 0.5 round to black;
    # otherwise soft masks never occlude anything for this detector
    img = Image(np.full((h, w, 3), 1, dtype=np.uint8))
    designated = [(x, y) for x in range(4, 10) for y in range(4, 10)]
    det = make_topk_pixel_detector(designated, k=18)
    target = det.detect(img)[0]
    field = drise_saliency(img, target, det,
                           MaskSpec(n_masks=200, grid=(4, 4), p=0.5, seed=7))
    inside = np.zeros((h, w), dtype=bool)
    for x, y in designated:
        inside[y, x] = True
    assert field.values[inside].mean() > field.values[~inside].mean()


def test_drise_zero_mass_when_detector_never_refires():
    img = Image(np.full((8, 8, 3), 10, dtype=np.uint8))
    target = make_detection(BBox(0, 0, 4, 4), 1.0, [0.9, 0.1])

    class NeverFires(Detector):
        def detect(self, img):
            return []

    with pytest.raises(ZeroMass):
        drise_saliency(img, target, NeverFires(),
                       MaskSpec(n_masks=8, grid=(2, 2), p=0.5, seed=1))


def test_drise_deterministic_and_counts_calls():
    img = Image(np.full((16, 16, 3), 90, dtype=np.uint8))
    target = make_detection(BBox(2, 2, 10, 10), 1.0, [0.7, 0.1, 0.1, 0.1])
    spec = MaskSpec(n_masks=37, grid=(3, 3), p=0.5, seed=9)
    logged = LoggedDetector(AlwaysTarget(target))
    a = drise_saliency(img, target, logged, spec)
    assert logged.log.calls == 37
    b = drise_saliency(img, target, LoggedDetector(AlwaysTarget(target)), spec)
    assert np.array_equal(a.values, b.values)
    assert a.normalized


def test_drise_weights_bounded(rng):
    # similarity of any proposal set stays within [0, 1]
    target = target_detection()
    for _ in range(100):
        boxes = rng.uniform(0, 8, size=(3, 2))
        proposals = [
            make_detection(BBox(u, v, u + rng.uniform(0.5, 4), v + rng.uniform(0.5, 4)),
                           float(rng.uniform(0, 1)),
                           rng.dirichlet(np.ones(4)))
            for u, v in boxes
        ]
        s = detection_similarity(target, proposals)
        assert 0.0 <= s <= 1.0
