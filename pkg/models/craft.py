"""
Mạng CRAFT đầy đủ
shallow conv → RCRFG × n → conv tổng hợp + skip toàn cục → conv tái tạo + pixel shuffle
"""

import logging
from typing import Dict, List, Optional

import numpy as np

from autograd import functional as F
from autograd.tape import Parameter, Var, as_var, no_grad
from core.tensor import TensorShapeError, as_tensor
from models.blocks import RCRFG
from models.craft_config import CraftConfig
from models.layers import Module, ModuleRoot
from quant.sites import INPUT_SITE, OUTPUT_SITE, FakeQuantizer

logger = logging.getLogger(__name__)

MIN_INPUT = 16


class CraftModel(ModuleRoot):
    def __init__(self, config: CraftConfig, seed: int = 0,
                 params: Optional[Dict[str, Parameter]] = None,
                 quantizer: Optional[FakeQuantizer] = None, dtype=np.float32):
        super().__init__(seed=seed, dtype=dtype, params=params, quantizer=quantizer)
        self.config = config
        c = config.channels
        top = Module(self, '')
        top.add_conv('shallow', config.in_channels, c, 3)
        self.groups: List[RCRFG] = [RCRFG(self, f"groups.{i}", config) for i in range(config.n_rcrfg)]
        if self.groups:
            top.add_conv('aggregate', c, c, 3)
        top.add_conv('reconstruct', c, config.in_channels * config.scale ** 2, 3)
        self._top = top
        if not self.shared:
            logger.debug(f"CraftModel khởi tạo: {self.param_count()} tham số, scale x{config.scale}")

    # --------------------------------------------------
    # FORWARD
    # --------------------------------------------------
    def forward(self, lr) -> Var:
        lr = as_var(lr)
        if lr.ndim != 4 or lr.shape[1] != self.config.in_channels:
            raise TensorShapeError(f"input phải là N×{self.config.in_channels}×h×w, nhận {tuple(lr.shape)}")
        n, _, h, w = lr.shape
        if h < MIN_INPUT or w < MIN_INPUT:
            raise TensorShapeError(f"input quá nhỏ {(h, w)}, cần tối thiểu {MIN_INPUT}×{MIN_INPUT}")

        x = self.quant_activation(INPUT_SITE, lr)
        multiple = self.config.pad_multiple
        x = F.reflect_pad(x, (-h) % multiple, (-w) % multiple)
        shallow = self._top.conv('shallow', x, padding=1)
        feat = shallow
        if self.groups:
            for group in self.groups:
                feat = group.forward(feat)
            feat = F.add(self._top.conv('aggregate', feat, padding=1), shallow)
        feat = F.crop(feat, h, w)
        out = F.pixel_shuffle(self._top.conv('reconstruct', feat, padding=1), self.config.scale)
        return self.quant_activation(OUTPUT_SITE, out)

    def super_resolve(self, lr: np.ndarray) -> np.ndarray:
        """Suy luận không ghi tape; nhận N×3×h×w hoặc 3×h×w"""
        arr = as_tensor(lr, dtype=self.dtype)
        single = arr.ndim == 3
        with no_grad():
            out = self.forward(arr[None] if single else arr).value
        return out[0] if single else out

    __call__ = super_resolve

    # --------------------------------------------------
    # VARIANTS
    # --------------------------------------------------
    def with_quantizer(self, quantizer: Optional[FakeQuantizer]) -> 'CraftModel':
        """Bản sao dùng chung tham số nhưng gắn bộ lượng tử hóa khác"""
        return CraftModel(self.config, seed=self.seed, params=self.params, quantizer=quantizer, dtype=self.dtype)

    def __repr__(self) -> str:
        return f"CraftModel({self.config}, params={self.param_count()})"
