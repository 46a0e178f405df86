"""
Site lượng tử hóa và bộ hook FakeQuantizer gắn vào mô hình
- Mỗi conv / linear có site weight + site activation cho input
- Mỗi toán hạng của matmul attention có site activation riêng
- Input / output của mô hình luôn ở io_bits (8)
"""

import logging
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from autograd import functional as F
from autograd.ste import fake_quantize_ste
from autograd.tape import Parameter, Var, as_var
from quant.quantizer import PASSTHROUGH_BITS, QuantParams, QuantizationError

logger = logging.getLogger(__name__)

INPUT_SITE = 'input'
OUTPUT_SITE = 'output'
IO_SITES = (INPUT_SITE, OUTPUT_SITE)
FGO_SCOPE = '.hferb.'
MIN_WIDTH = 1e-6

Observer = Callable[[str, "SiteKind", np.ndarray], None]


class SiteKind(str, Enum):
    WEIGHT = 'weight'
    ACTIVATION = 'activation'


class MeasureType(str, Enum):
    FGO = 'fgo'
    FEATURE = 'feature'


class QuantMode(Enum):
    OFF = 'off'
    OBSERVE = 'observe'
    QUANTIZE = 'quantize'


def measure_for(name: str, kind: SiteKind, use_fgo: bool = True) -> MeasureType:
    """FGO chỉ cho activation bên trong HFERB và input/output của mô hình"""
    if not use_fgo or kind is SiteKind.WEIGHT:
        return MeasureType.FEATURE
    if name in IO_SITES or FGO_SCOPE in f".{name}":
        return MeasureType.FGO
    return MeasureType.FEATURE


@dataclass
class QuantSite:
    name: str
    kind: SiteKind
    measure: MeasureType
    l: np.ndarray
    u: np.ndarray
    bits: int

    def __post_init__(self):
        self.l = np.atleast_1d(np.asarray(self.l, dtype=np.float64)).copy()
        self.u = np.atleast_1d(np.asarray(self.u, dtype=np.float64)).copy()
        if self.l.shape != self.u.shape:
            raise QuantizationError(f"site {self.name}: l {self.l.shape} và u {self.u.shape} lệch shape")

    @property
    def per_channel(self) -> bool:
        return self.l.size > 1

    @property
    def params(self) -> QuantParams:
        if self.per_channel:
            return QuantParams(self.l, self.u, self.bits)
        return QuantParams(float(self.l[0]), float(self.u[0]), self.bits)

    def to_dict(self) -> Dict:
        return {
            'name': self.name,
            'kind': self.kind.value,
            'measure': self.measure.value,
            'bits': self.bits,
            'l': self.l.tolist(),
            'u': self.u.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'QuantSite':
        return cls(
            name=data['name'],
            kind=SiteKind(data['kind']),
            measure=MeasureType(data['measure']),
            l=np.asarray(data['l'], dtype=np.float64),
            u=np.asarray(data['u'], dtype=np.float64),
            bits=int(data['bits']),
        )


def _channel_view(bound: Var, ndim: int) -> Var:
    if bound.shape[0] == 1 or ndim <= 1:
        return bound
    return F.reshape(bound, (bound.shape[0],) + (1,) * (ndim - 1))


class FakeQuantizer:
    """
    Hook lượng tử hóa giả:
    - OFF: trả nguyên tensor
    - OBSERVE: ghi lại tensor tại từng site (phục vụ hiệu chỉnh)
    - QUANTIZE: x̂ = fake_quantize(x) với STE cho (x, l, u)
    """

    def __init__(self, bits: int = 8, io_bits: int = 8, use_fgo: bool = True,
                 per_channel_weights: bool = False):
        self.bits = bits
        self.io_bits = io_bits
        self.use_fgo = use_fgo
        self.per_channel_weights = per_channel_weights
        self.mode = QuantMode.OFF
        self.sites: Dict[str, QuantSite] = OrderedDict()
        self.observed: Dict[str, np.ndarray] = OrderedDict()
        self.observed_kinds: Dict[str, SiteKind] = {}
        self._trainable: Dict[str, Tuple[Parameter, Parameter]] = OrderedDict()
        self.clamp_events = 0
        self._observer: Optional[Observer] = None

    # --------------------------------------------------
    # SITE REGISTRY
    # --------------------------------------------------
    def bits_for(self, name: str) -> int:
        if self.bits == PASSTHROUGH_BITS:
            return PASSTHROUGH_BITS
        return self.io_bits if name in IO_SITES else self.bits

    def register(self, name: str, kind: SiteKind, l, u) -> QuantSite:
        site = QuantSite(name=name, kind=kind, measure=measure_for(name, kind, self.use_fgo),
                         l=l, u=u, bits=self.bits_for(name))
        self.sites[name] = site
        return site

    def load_sites(self, sites: List[QuantSite]):
        self.sites = OrderedDict((s.name, s) for s in sites)
        self.mode = QuantMode.QUANTIZE

    def activation_sites(self) -> List[QuantSite]:
        return [s for s in self.sites.values() if s.kind is SiteKind.ACTIVATION]

    def weight_sites(self) -> List[QuantSite]:
        return [s for s in self.sites.values() if s.kind is SiteKind.WEIGHT]

    # --------------------------------------------------
    # HOOKS
    # --------------------------------------------------
    def activation(self, name: str, x) -> Var:
        return self._hook(name, as_var(x), SiteKind.ACTIVATION)

    def weight(self, name: str, w) -> Var:
        return self._hook(name, as_var(w), SiteKind.WEIGHT)

    def _hook(self, name: str, x: Var, kind: SiteKind) -> Var:
        if self.mode is QuantMode.OFF:
            return x
        if self.mode is QuantMode.OBSERVE:
            if self._observer is not None:
                self._observer(name, kind, x.value)
            else:
                self.observed[name] = x.value
                self.observed_kinds[name] = kind
            return x
        site = self.sites.get(name)
        if site is None:
            raise QuantizationError(f"site '{name}' chưa được hiệu chỉnh")
        if site.bits == PASSTHROUGH_BITS:
            return x
        if name in self._trainable:
            l, u = self._trainable[name]
        else:
            l, u = Var(site.l), Var(site.u)
        return fake_quantize_ste(x, _channel_view(l, x.ndim), _channel_view(u, x.ndim), site.bits)

    @contextmanager
    def observing(self, observer: Optional[Observer] = None):
        """
        Khối lệnh ghi lại tensor tại mọi site; trả về dict name → mảng.
        Có `observer` thì tensor được chuyển thẳng cho callback, không giữ lại.
        """
        previous = self.mode
        self.mode = QuantMode.OBSERVE
        self.observed = OrderedDict()
        self._observer = observer
        try:
            yield self.observed
        finally:
            self.mode = previous
            self._observer = None

    # --------------------------------------------------
    # BOUNDARY REFINEMENT SUPPORT
    # --------------------------------------------------
    def boundary_parameters(self) -> List[Parameter]:
        """Tạo Parameter (l, u) học được cho mọi site đang lượng tử hóa"""
        self._trainable = OrderedDict()
        params = []
        for site in self.sites.values():
            if site.bits == PASSTHROUGH_BITS:
                continue
            l = Parameter(site.l.copy(), name=f"{site.name}.l")
            u = Parameter(site.u.copy(), name=f"{site.name}.u")
            self._trainable[site.name] = (l, u)
            params.extend([l, u])
        return params

    def enforce_order(self):
        """u ≤ l sau một bước cập nhật → kẹp u = l + 1e-6 và ghi log"""
        for name, (l, u) in self._trainable.items():
            bad = u.value <= l.value
            if np.any(bad):
                u.value = np.where(bad, l.value + MIN_WIDTH, u.value)
                self.clamp_events += 1
                logger.warning(f"⚠️ Site {name}: u <= l sau cập nhật, kẹp u = l + {MIN_WIDTH}")

    def snapshot(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        if self._trainable:
            return {n: (l.value.copy(), u.value.copy()) for n, (l, u) in self._trainable.items()}
        return {n: (s.l.copy(), s.u.copy()) for n, s in self.sites.items()}

    def restore(self, state: Dict[str, Tuple[np.ndarray, np.ndarray]]):
        for name, (l, u) in state.items():
            if name in self._trainable:
                self._trainable[name][0].value = l.copy()
                self._trainable[name][1].value = u.copy()
            else:
                self.sites[name].l = l.copy()
                self.sites[name].u = u.copy()

    def commit_boundaries(self):
        """Ghi (l, u) đã học trở lại các site và bỏ chế độ học"""
        for name, (l, u) in self._trainable.items():
            self.sites[name].l = np.asarray(l.value, dtype=np.float64).copy()
            self.sites[name].u = np.asarray(u.value, dtype=np.float64).copy()
        self._trainable = OrderedDict()
