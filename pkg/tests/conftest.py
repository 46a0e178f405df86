"""
Fixture dùng chung cho bộ test
- rng có seed cố định
- cấu hình CRAFT tí hon (C=8, 1 RCRFG, 1 CRFB) để forward/backward chạy nhanh
- thư mục tạm chứa ảnh tổng hợp
"""

import numpy as np
import pytest

from dataio.codecs import save_tensor
from dataio.synthetic import SyntheticDatasetSpec
from models.craft import CraftModel
from models.craft_config import CraftConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return CraftConfig(channels=8, heads=2, n_rcrfg=1, n_crfb_per_rcrfg=1,
                       n_srwab_per_crfb=2, scale=2)


@pytest.fixture
def tiny_model(tiny_config):
    return CraftModel(tiny_config, seed=0)


@pytest.fixture
def tiny_model64(tiny_config):
    return CraftModel(tiny_config, seed=0, dtype=np.float64)


@pytest.fixture
def lr_batch(rng):
    return rng.uniform(0.0, 1.0, size=(1, 3, 16, 16)).astype(np.float32)


@pytest.fixture
def image_dir(tmp_path):
    """Hai ảnh PPM 32×32 sinh từ bộ tổng hợp"""
    root = tmp_path / "images"
    root.mkdir()
    spec = SyntheticDatasetSpec(seed=3, count=2, size=32)
    for i, image in enumerate(spec.generate()):
        save_tensor(image, root / f"img{i}.ppm")
    return root
