"""
Chạy end-to-end trên mô hình toy (C=16, 1 RCRFG, x2, dữ liệu tổng hợp)
Đánh dấu `slow`: chạy bằng `pytest -m slow`
"""

import numpy as np
import pytest

from dataio.datasets import open_dataset
from freqlab.curves import drop_ratio_curve
from freqlab.dropping import THETAS, DropSpec
from models.craft_config import CraftConfig
from quant.pipeline import PtqConfig
from quant.refine import calibration_loss, make_batches
from services.evaluation_service import EvaluationService
from services.quantization_service import QuantizationService
from services.training_service import TrainingService

pytestmark = pytest.mark.slow

TOY_CONFIG = CraftConfig(channels=16, heads=4, n_rcrfg=1, n_crfb_per_rcrfg=1, scale=2)
GAMMAS = [0.0, 0.2, 0.4, 0.6, 0.8]


def _monotone(values):
    diffs = np.diff(values)
    return bool(np.all(diffs >= -1e-9) or np.all(diffs <= 1e-9))


@pytest.fixture(scope='module')
def toy_model():
    train_set = open_dataset('synthetic', seed=0, count=24, size=96)
    service = TrainingService(TOY_CONFIG, seed=0)
    result = service.train(train_set, iters=2000, batch=4, lr=5e-4, patch=24, log_every=200)
    return result.model


@pytest.fixture(scope='module')
def held_out():
    return open_dataset('synthetic', seed=101, count=6, size=64)


@pytest.fixture(scope='module')
def held_out_hf():
    return open_dataset('synthetic-hf', seed=202, count=6, size=64)


def _quantize(model, bits, method, epochs=10, source='synthetic', seed=7):
    service = QuantizationService(model, PtqConfig(bits=bits, method=method, epochs=epochs))
    calib = service.calibration_set(open_dataset(source, seed=seed, count=8, size=64), n=8, patch=24, seed=seed)
    return service.quantize(calib), calib


def _mean_psnr(model, dataset):
    _, mean = EvaluationService(2, metrics=['psnr']).evaluate(dataset, model=model)
    return mean.psnr


def test_toy_training_beats_bicubic(toy_model, held_out):
    _, bicubic = EvaluationService(2, metrics=['psnr']).evaluate(held_out, baseline=True)
    assert _mean_psnr(toy_model, held_out) >= bicubic.psnr + 0.3


def test_eight_bit_stays_close_to_full_precision(toy_model, held_out):
    result, _ = _quantize(toy_model, 8, 'fgo')
    assert abs(_mean_psnr(toy_model, held_out) - _mean_psnr(result.model, held_out)) <= 0.5


def test_four_bit_method_ordering(toy_model, held_out_hf):
    scores = {}
    for method in ('fgo', 'feature', 'minmax'):
        result, _ = _quantize(toy_model, 4, method, source='synthetic-hf')
        scores[method] = _mean_psnr(result.model, held_out_hf)
    assert scores['fgo'] >= scores['feature'] >= scores['minmax']


def test_boundary_refinement_lowers_loss(toy_model):
    result, calib = _quantize(toy_model, 4, 'feature', epochs=10)
    assert result.refine.final_loss < result.refine.initial_loss
    batches = make_batches(list(calib), 2)
    targets = [toy_model(b) for b in batches]
    assert calibration_loss(result.model, batches, targets) == pytest.approx(result.refine.final_loss, rel=1e-6)


@pytest.mark.parametrize("mode", ['D', 'E'])
def test_drop_curves_are_monotone(toy_model, held_out, mode):
    curve = drop_ratio_curve(toy_model, held_out, GAMMAS, mode=mode, scale=2)
    assert curve.ratios[0] == 0.0
    assert _monotone(curve.ratios)


def test_theta_curve_is_monotone(toy_model, held_out):
    curve = drop_ratio_curve(toy_model, held_out, [DropSpec(theta=t) for t in THETAS], mode='E', scale=2)
    assert _monotone(curve.ratios)
