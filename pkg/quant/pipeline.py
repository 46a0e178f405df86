"""
Pipeline PTQ đầy đủ
  stage 1: với từng patch calibration, ADC trên activation của mọi site rồi gộp EMA
           (patch đầu khởi tạo trực tiếp); trọng số ADC một lần với tiêu chí FEATURE
  stage 2: boundary refinement (chỉ cho method fgo / feature)
Baseline minmax / percentile thay stage 1 và bỏ stage 2.
"""

import logging
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import config
from quant.clipping import (adaptive_dual_clip, adaptive_dual_clip_per_channel,
                            minmax_calibrate, percentile_calibrate)
from quant.quantizer import PASSTHROUGH_BITS, SUPPORTED_BITS, QuantizationError
from quant.refine import RefineResult, boundary_refine
from quant.sites import MIN_WIDTH, FakeQuantizer, QuantMode, QuantSite, SiteKind, measure_for

logger = logging.getLogger(__name__)

METHODS = ('fgo', 'feature', 'minmax', 'percentile')
OPTIMIZERS = ('adam', 'sgd')


@dataclass
class PtqConfig:
    bits: int = 8
    method: str = 'fgo'
    epochs: int = config.PTQ_EPOCHS
    batch: int = config.PTQ_BATCH
    lr: Optional[float] = None
    beta: float = config.PTQ_BETA
    percentile: float = config.PERCENTILE
    io_bits: int = 8
    per_channel_weights: bool = False
    optimizer: str = 'adam'
    max_workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        errors = []
        if self.bits not in SUPPORTED_BITS and self.bits != PASSTHROUGH_BITS:
            errors.append(f"bits phải thuộc {SUPPORTED_BITS}, nhận {self.bits}")
        if self.method not in METHODS:
            errors.append(f"method không hỗ trợ: {self.method}")
        if self.epochs < 0:
            errors.append(f"epochs không được âm, nhận {self.epochs}")
        if self.batch < 1:
            errors.append(f"batch phải >= 1, nhận {self.batch}")
        if not 0.0 <= self.beta < 1.0:
            errors.append(f"beta phải nằm trong [0, 1), nhận {self.beta}")
        if self.lr is not None and self.lr <= 0:
            errors.append(f"lr phải dương, nhận {self.lr}")
        if self.optimizer not in OPTIMIZERS:
            errors.append(f"optimizer không hỗ trợ: {self.optimizer}")
        if errors:
            raise QuantizationError("; ".join(errors))

    @property
    def learning_rate(self) -> float:
        if self.lr is not None:
            return self.lr
        return config.PTQ_LR_8BIT if self.bits == 8 else config.PTQ_LR_LOW_BIT

    @property
    def use_fgo(self) -> bool:
        return self.method == 'fgo'

    @property
    def refines(self) -> bool:
        return self.method in ('fgo', 'feature') and self.epochs > 0 and self.bits != PASSTHROUGH_BITS

    def to_dict(self) -> dict:
        return {
            'bits': self.bits, 'method': self.method, 'epochs': self.epochs, 'batch': self.batch,
            'lr': self.learning_rate, 'beta': self.beta, 'percentile': self.percentile,
            'io_bits': self.io_bits, 'per_channel_weights': self.per_channel_weights, 'optimizer': self.optimizer,
        }


@dataclass
class PtqResult:
    model: object
    quantizer: FakeQuantizer
    refine: Optional[RefineResult] = None
    observed_min: Dict[str, float] = field(default_factory=dict)
    observed_max: Dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def sites(self) -> List[QuantSite]:
        return list(self.quantizer.sites.values())


def ema_update(previous: Optional[float], sample: float, beta: float) -> float:
    """Mẫu đầu tiên khởi tạo trực tiếp; sau đó x ← β·x + (1 − β)·mẫu"""
    if previous is None:
        return sample
    return beta * previous + (1.0 - beta) * sample


def _widen(l, u):
    """Bảo đảm u > l cho site có dữ liệu hằng"""
    l = np.asarray(l, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return l, np.where(u <= l, l + MIN_WIDTH, u)


class _ActivationStats:
    """Gộp biên từng mẫu của một site (EMA / min-max toàn cục / trung bình percentile)"""

    def __init__(self, kind: SiteKind):
        self.kind = kind
        self.l: Optional[float] = None
        self.u: Optional[float] = None
        self.count = 0
        self.run_min = np.inf
        self.run_max = -np.inf

    def fold(self, l: float, u: float, method: str, beta: float):
        if method == 'minmax':
            self.l = l if self.l is None else min(self.l, l)
            self.u = u if self.u is None else max(self.u, u)
        elif method == 'percentile':
            n = self.count
            self.l = l if self.l is None else (self.l * n + l) / (n + 1)
            self.u = u if self.u is None else (self.u * n + u) / (n + 1)
        else:
            self.l = ema_update(self.l, l, beta)
            self.u = ema_update(self.u, u, beta)
        self.count += 1


class _Calibrator:
    """Stage 1: gom biên của mọi site qua từng patch calibration"""

    def __init__(self, quantizer: FakeQuantizer, cfg: PtqConfig):
        self.quantizer = quantizer
        self.cfg = cfg
        self.activations: Dict[str, _ActivationStats] = OrderedDict()
        self.weights: Dict[str, Tuple[np.ndarray, np.ndarray]] = OrderedDict()
        self._pending: List[Tuple[str, np.ndarray]] = []

    def observe(self, name: str, kind: SiteKind, value: np.ndarray):
        if kind is SiteKind.WEIGHT:
            if name not in self.weights:
                self.weights[name] = self._weight_bounds(value)
            return
        self._pending.append((name, value))

    def _weight_bounds(self, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        bits = self.quantizer.bits_for('')
        if self.cfg.method in ('minmax', 'percentile'):
            if self.cfg.per_channel_weights:
                flat = w.reshape(w.shape[0], -1)
                return flat.min(axis=1).astype(np.float64), flat.max(axis=1).astype(np.float64)
            return tuple(np.array([b]) for b in minmax_calibrate(w))
        if self.cfg.per_channel_weights:
            return adaptive_dual_clip_per_channel(w, bits)
        result = adaptive_dual_clip(w, bits)
        return np.array([result.l]), np.array([result.u])

    def _sample_bounds(self, name: str, x: np.ndarray) -> Tuple[float, float]:
        method = self.cfg.method
        if method == 'minmax':
            return minmax_calibrate(x)
        if method == 'percentile':
            return percentile_calibrate(x, self.cfg.percentile)
        measure = measure_for(name, SiteKind.ACTIVATION, self.cfg.use_fgo)
        return adaptive_dual_clip(x, self.quantizer.bits_for(name), measure).as_tuple()

    def flush(self, pool: Optional[ThreadPoolExecutor]):
        """ADC song song theo site của một patch; gộp EMA tuần tự theo thứ tự site"""
        pending, self._pending = self._pending, []

        def run(item):
            name, x = item
            return self._sample_bounds(name, x), float(np.min(x)), float(np.max(x))

        results = list(pool.map(run, pending)) if pool is not None else [run(p) for p in pending]
        for (name, _), ((l, u), lo, hi) in zip(pending, results):
            stats = self.activations.setdefault(name, _ActivationStats(SiteKind.ACTIVATION))
            stats.fold(l, u, self.cfg.method, self.cfg.beta)
            stats.run_min = min(stats.run_min, lo)
            stats.run_max = max(stats.run_max, hi)


def calibrate_sites(model_q, calib: Sequence[np.ndarray], cfg: PtqConfig) -> _Calibrator:
    """Stage 1 trên model_q (đang gắn FakeQuantizer); đăng ký site vào quantizer"""
    quantizer: FakeQuantizer = model_q.quantizer
    calibrator = _Calibrator(quantizer, cfg)
    pool = ThreadPoolExecutor(max_workers=cfg.max_workers) if cfg.max_workers > 1 else None
    try:
        for i, patch in enumerate(calib):
            with quantizer.observing(calibrator.observe):
                model_q.super_resolve(patch[None])
            calibrator.flush(pool)
            if (i + 1) % 10 == 0:
                logger.info(f"   calibration {i + 1}/{len(calib)} patch")
    finally:
        if pool is not None:
            pool.shutdown()

    for name, (l, u) in calibrator.weights.items():
        quantizer.register(name, SiteKind.WEIGHT, *_widen(l, u))
    for name, stats in calibrator.activations.items():
        quantizer.register(name, SiteKind.ACTIVATION, *_widen(stats.l, stats.u))
    quantizer.mode = QuantMode.QUANTIZE
    return calibrator


def ptq_pipeline(model_fp, calib: Sequence[np.ndarray], cfg: PtqConfig) -> PtqResult:
    """
    Lượng tử hóa sau huấn luyện cho một CraftModel.
    Trả về mô hình dùng chung trọng số với model_fp nhưng gắn FakeQuantizer đã hiệu chỉnh.
    """
    calib = list(calib)
    if not calib:
        raise QuantizationError("tập calibration rỗng")
    start = time.time()
    quantizer = FakeQuantizer(bits=cfg.bits, io_bits=cfg.io_bits, use_fgo=cfg.use_fgo,
                              per_channel_weights=cfg.per_channel_weights)
    model_q = model_fp.with_quantizer(quantizer)

    logger.info(f"🤖 PTQ {cfg.method} {cfg.bits}-bit trên {len(calib)} patch calibration")
    calibrator = calibrate_sites(model_q, calib, cfg)
    logger.info(f"✅ Stage 1 xong: {len(quantizer.weight_sites())} site trọng số, "
                f"{len(quantizer.activation_sites())} site activation")

    refine = None
    if cfg.refines:
        refine = boundary_refine(model_fp, model_q, calib, cfg)

    result = PtqResult(
        model=model_q,
        quantizer=quantizer,
        refine=refine,
        observed_min={n: s.run_min for n, s in calibrator.activations.items()},
        observed_max={n: s.run_max for n, s in calibrator.activations.items()},
        seconds=time.time() - start,
    )
    logger.info(f"✅ PTQ hoàn tất sau {result.seconds:.1f}s")
    return result
