"""
Nền tảng module cho CRAFT
- ModuleRoot: sở hữu kho Parameter theo tên chấm (dotted name) và FakeQuantizer
- Module: khối con đăng ký tham số vào root, mọi conv / linear / matmul đi qua hook lượng tử hóa
"""

import logging
import math
from collections import OrderedDict
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import stats

from autograd import functional as F
from autograd.tape import Parameter, Var, as_var
from models.craft_config import CraftConfigError
from quant.sites import FakeQuantizer
from utils.seeding import SeedStreams

logger = logging.getLogger(__name__)

PROJ_STD = 0.02


class ModuleRoot:
    """Kho tham số + bộ lượng tử hóa dùng chung cho mọi khối con"""

    def __init__(self, seed: int = 0, dtype=np.float32,
                 params: Optional[Dict[str, Parameter]] = None,
                 quantizer: Optional[FakeQuantizer] = None):
        self.dtype = np.dtype(dtype)
        self.seed = seed
        self.rng = SeedStreams(seed).generator('init')
        self.shared = params is not None
        self.params: Dict[str, Parameter] = params if params is not None else OrderedDict()
        self.quantizer = quantizer

    # ---------------- parameter store ----------------
    def register(self, name: str, value: np.ndarray, trainable: bool = True) -> Parameter:
        if self.shared:
            if name not in self.params:
                raise CraftConfigError(f"kho tham số dùng chung thiếu '{name}'")
            return self.params[name]
        if name in self.params:
            raise CraftConfigError(f"tham số trùng tên: '{name}'")
        param = Parameter(np.asarray(value, dtype=self.dtype), trainable=trainable, name=name)
        self.params[name] = param
        return param

    def named_parameters(self) -> Iterator[Tuple[str, Parameter]]:
        return iter(self.params.items())

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def param_count(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    def state_dict(self) -> Dict[str, np.ndarray]:
        return OrderedDict((name, p.value) for name, p in self.params.items())

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        missing = [n for n in self.params if n not in state]
        unexpected = [n for n in state if n not in self.params]
        if missing or unexpected:
            raise CraftConfigError(f"state_dict lệch: thiếu {missing[:5]}, thừa {unexpected[:5]}")
        for name, p in self.params.items():
            value = np.asarray(state[name])
            if value.shape != p.value.shape:
                raise CraftConfigError(
                    f"'{name}': shape {tuple(value.shape)} khác {tuple(p.value.shape)}"
                )
            p.value = value.astype(p.value.dtype, copy=True)

    @contextmanager
    def frozen(self):
        """Tạm đóng băng mọi trọng số (dùng khi chỉ học biên lượng tử)"""
        flags = {name: p.trainable for name, p in self.params.items()}
        for p in self.params.values():
            p.trainable = False
        try:
            yield self
        finally:
            for name, p in self.params.items():
                p.trainable = flags[name]

    # ---------------- initializers ----------------
    def trunc_normal(self, shape, std: float = PROJ_STD) -> np.ndarray:
        return stats.truncnorm.rvs(-2.0, 2.0, scale=std, size=shape, random_state=self.rng)

    def kaiming_uniform(self, shape, fan_in: int) -> np.ndarray:
        bound = 1.0 / math.sqrt(fan_in)
        return self.rng.uniform(-bound, bound, size=shape)

    # ---------------- quant hooks ----------------
    def quant_activation(self, name: str, x) -> Var:
        x = as_var(x)
        return x if self.quantizer is None else self.quantizer.activation(name, x)

    def quant_weight(self, name: str, w) -> Var:
        w = as_var(w)
        return w if self.quantizer is None else self.quantizer.weight(name, w)


class Module:
    """Khối con; tên tham số = '<prefix>.<local>'"""

    def __init__(self, root: ModuleRoot, prefix: str):
        self.root = root
        self.prefix = prefix

    def full(self, local: str) -> str:
        return f"{self.prefix}.{local}" if self.prefix else local

    def param(self, local: str) -> Parameter:
        return self.root.params[self.full(local)]

    def has(self, local: str) -> bool:
        return self.full(local) in self.root.params

    # ---------------- khai báo tham số ----------------
    def add_conv(self, local: str, cin: int, cout: int, k: int, bias: bool = True,
                 groups: int = 1, init: str = 'uniform'):
        shape = (cout, cin // groups, k, k)
        fan_in = (cin // groups) * k * k
        if init == 'trunc_normal':
            weight = self.root.trunc_normal(shape)
        else:
            weight = self.root.kaiming_uniform(shape, fan_in)
        self.root.register(self.full(f"{local}.weight"), weight)
        if bias:
            self.root.register(self.full(f"{local}.bias"), np.zeros(cout))

    def add_linear(self, local: str, cin: int, cout: int, bias: bool = True):
        self.root.register(self.full(f"{local}.weight"), self.root.trunc_normal((cout, cin)))
        if bias:
            self.root.register(self.full(f"{local}.bias"), np.zeros(cout))

    def add_norm(self, local: str, channels: int):
        self.root.register(self.full(f"{local}.weight"), np.ones(channels))
        self.root.register(self.full(f"{local}.bias"), np.zeros(channels))

    # ---------------- op có hook lượng tử hóa ----------------
    def conv(self, local: str, x, padding: int = 0, groups: int = 1) -> Var:
        name = self.full(local)
        x = self.root.quant_activation(f"{name}.input", x)
        w = self.root.quant_weight(f"{name}.weight", self.root.params[f"{name}.weight"])
        bias = self.root.params.get(f"{name}.bias")
        return F.conv2d(x, w, bias, stride=1, padding=padding, groups=groups)

    def linear(self, local: str, x) -> Var:
        """x có kênh ở trục cuối: (..., cin) → (..., cout)"""
        name = self.full(local)
        x = self.root.quant_activation(f"{name}.input", x)
        w = self.root.quant_weight(f"{name}.weight", self.root.params[f"{name}.weight"])
        out = F.matmul(x, F.swap_last(w))
        bias = self.root.params.get(f"{name}.bias")
        return out if bias is None else F.add(out, bias)

    def matmul(self, local: str, a, b) -> Var:
        name = self.full(local)
        a = self.root.quant_activation(f"{name}.lhs", a)
        b = self.root.quant_activation(f"{name}.rhs", b)
        return F.matmul(a, b)

    def norm(self, local: str, x, axis: int = 1) -> Var:
        return F.layer_norm(x, self.param(f"{local}.weight"), self.param(f"{local}.bias"),
                            eps=1e-5, axis=axis)
