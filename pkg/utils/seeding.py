"""
Tách một seed 64-bit thành các luồng ngẫu nhiên có tên
Mỗi mục đích (init, synthetic, calibration, train, ...) có substream riêng,
nên thêm/bớt một mục đích không làm lệch các luồng còn lại.
"""

import zlib

import numpy as np


class SeedStreams:
    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def sequence(self, purpose: str, *ids: int) -> np.random.SeedSequence:
        key = (zlib.crc32(purpose.encode('utf-8')),) + tuple(int(i) for i in ids)
        return np.random.SeedSequence(entropy=self.seed, spawn_key=key)

    def generator(self, purpose: str, *ids: int) -> np.random.Generator:
        return np.random.default_rng(self.sequence(purpose, *ids))

    def __repr__(self) -> str:
        return f"SeedStreams(seed={self.seed})"
