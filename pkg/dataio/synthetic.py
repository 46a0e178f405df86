"""
Sinh ảnh tổng hợp thay cho bộ dữ liệu huấn luyện thật
Mỗi ảnh i dùng substream ('synthetic', i) nên cùng seed → dataset giống hệt từng bit.
Bộ sinh được chọn xoay vòng theo `mix`.
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy import ndimage

from config import config
from utils.seeding import SeedStreams

GENERATORS = ('checkerboard', 'grating', 'blobs', 'voronoi', 'noise')
HIGH_FREQ_MIX = ('grating',)


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    yy, xx = np.mgrid[0:size, 0:size]
    return yy.astype(np.float64), xx.astype(np.float64)


def _colors(rng: np.random.Generator, k: int) -> np.ndarray:
    return rng.uniform(0.05, 0.95, size=(k, 3))


def checkerboard(rng: np.random.Generator, size: int) -> np.ndarray:
    period = int(rng.integers(4, 17))
    oy, ox = rng.integers(0, period, size=2)
    yy, xx = _grid(size)
    cells = ((yy + oy) // period + (xx + ox) // period) % 2
    colors = _colors(rng, 2)
    return colors[cells.astype(np.int64)].transpose(2, 0, 1)


def grating(rng: np.random.Generator, size: int) -> np.ndarray:
    """Sóng sin định hướng; năng lượng phổ tập trung ở bán kính freq·size"""
    freq = rng.uniform(0.05, 0.3)
    angle = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = _grid(size)
    wave = np.sin(2.0 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
    amplitude = rng.uniform(0.2, 0.45, size=3)[:, None, None]
    base = rng.uniform(0.45, 0.55, size=3)[:, None, None]
    return base + amplitude * wave[None]


def blobs(rng: np.random.Generator, size: int) -> np.ndarray:
    k = int(rng.integers(3, 9))
    yy, xx = _grid(size)
    image = np.tile(_colors(rng, 1)[0][:, None, None], (1, size, size)) * 0.5
    for color in _colors(rng, k):
        cy, cx = rng.uniform(0, size, size=2)
        sigma = rng.uniform(size / 20.0, size / 6.0)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * sigma * sigma))
        image = image * (1.0 - weight) + color[:, None, None] * weight
    return image


def voronoi(rng: np.random.Generator, size: int) -> np.ndarray:
    k = int(rng.integers(6, 21))
    seeds = rng.uniform(0, size, size=(k, 2))
    yy, xx = _grid(size)
    dist = (yy[None] - seeds[:, 0, None, None]) ** 2 + (xx[None] - seeds[:, 1, None, None]) ** 2
    cells = np.argmin(dist, axis=0)
    return _colors(rng, k)[cells].transpose(2, 0, 1)


def filtered_noise(rng: np.random.Generator, size: int) -> np.ndarray:
    sigma = rng.uniform(1.0, 3.0)
    noise = rng.standard_normal((3, size, size))
    smooth = ndimage.gaussian_filter(noise, sigma=(0, sigma, sigma), mode='wrap')
    lo, hi = smooth.min(), smooth.max()
    return 0.05 + 0.9 * (smooth - lo) / (hi - lo)


_BUILDERS: Dict[str, Callable[[np.random.Generator, int], np.ndarray]] = {
    'checkerboard': checkerboard,
    'grating': grating,
    'blobs': blobs,
    'voronoi': voronoi,
    'noise': filtered_noise,
}


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    seed: int = 0
    count: int = config.SYNTHETIC_COUNT
    size: int = config.SYNTHETIC_SIZE
    mix: Tuple[str, ...] = GENERATORS

    def __post_init__(self):
        unknown = [g for g in self.mix if g not in _BUILDERS]
        if unknown or not self.mix:
            raise ValueError(f"generator không hợp lệ: {unknown or 'mix rỗng'}")
        if self.count < 1 or self.size < 1:
            raise ValueError(f"count và size phải dương, nhận {self.count}, {self.size}")

    def generator_of(self, index: int) -> str:
        return self.mix[index % len(self.mix)]

    def image(self, index: int) -> np.ndarray:
        rng = SeedStreams(self.seed).generator('synthetic', index)
        out = _BUILDERS[self.generator_of(index)](rng, self.size)
        return np.clip(out, 0.0, 1.0).astype(np.float32)

    def generate(self) -> List[np.ndarray]:
        return [self.image(i) for i in range(self.count)]
