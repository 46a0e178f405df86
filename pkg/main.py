"""
main.py
Điểm vào dòng lệnh duy nhất của bộ công cụ CRAFT
- train      → huấn luyện mô hình, ghi checkpoint + CSV loss
- sr         → siêu phân giải một ảnh
- freq-drop  → đường cong tỉ lệ sụt PSNR khi bỏ tần số cao
- quantize   → PTQ (fgo / feature / minmax / percentile)
- eval       → PSNR / SSIM trên một dataset
- spectrum   → phổ log-biên độ theo bán kính
Mỗi file output có một file `<output>.manifest` đi kèm.
Exit code 0 khi ghi xong mọi output; lỗi → đúng một dòng `error: <Loại>: <thông điệp>` ra stderr.
"""

import argparse
import logging
import sys
import time
from typing import Dict, List, Optional

from config import config
from dataio.checkpoint import load_checkpoint, save_checkpoint
from dataio.datasets import SYNTHETIC_HF_SOURCE, SYNTHETIC_SOURCE, open_dataset
from dataio.models import RunManifest
from models.craft_config import CraftConfig
from quant.pipeline import METHODS, PtqConfig
from quant.quantizer import SUPPORTED_BITS, QuantizationError
from services.evaluation_service import EvaluationService
from services.frequency_service import FrequencyService
from services.inference_service import InferenceService
from services.quantization_service import QuantizationService
from services.training_service import TrainingService
from utils.helpers import format_table, git_describe, parse_int_list, parse_range, write_csv

logger = logging.getLogger(__name__)


def setup_logging(level: str = config.LOG_LEVEL, log_file: str = config.LOG_FILE):
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding='utf-8'))
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
    )


class CliError(Exception):
    """Lỗi tham số dòng lệnh phát hiện sau khi parse"""
    pass


# ================= MANIFEST =================
class _Run:
    """Gom flag + seed + thời gian để ghi manifest cạnh mỗi output"""

    def __init__(self, args: argparse.Namespace):
        self.command = args.command
        self.flags: Dict = {k: v for k, v in vars(args).items() if k not in ('command', 'handler')}
        self.seed = getattr(args, 'seed', config.CRAFT_SEED)
        self.start = time.time()
        self.describe = git_describe()

    def manifest(self, output_path) -> None:
        RunManifest(
            command=self.command,
            flags=self.flags,
            seed=self.seed,
            git_describe=self.describe,
            wall_time=time.time() - self.start,
        ).write(output_path)


def _default_heads(channels: int) -> int:
    """6 head nếu chia hết, nếu không lấy số chẵn lớn nhất ≤ 6 chia hết channels"""
    for heads in (6, 4, 2):
        if channels % heads == 0:
            return heads
    return 2


def _open_source(source: str, seed: int, count: Optional[int] = None, size: Optional[int] = None):
    return open_dataset(source, seed=seed, count=count, size=size, max_workers=config.CRAFT_THREADS)


# ================= COMMANDS =================
def cmd_train(args: argparse.Namespace, run: _Run):
    craft_config = CraftConfig(
        channels=args.channels,
        heads=args.heads or _default_heads(args.channels),
        n_rcrfg=args.rcrfg,
        n_crfb_per_rcrfg=args.crfb,
        scale=args.scale,
    )
    service = TrainingService(craft_config, seed=args.seed)
    dataset = _open_source(args.data, args.seed, args.count, args.size)
    result = service.train(dataset, iters=args.iters, batch=args.batch, lr=args.lr,
                           patch=args.patch, log_every=args.log_every)

    save_checkpoint(result.model, args.out)
    run.manifest(args.out)
    loss_path = f"{args.out}.loss.csv"
    write_csv(loss_path, ['step', 'loss'], result.losses)
    run.manifest(loss_path)
    print(f"checkpoint={args.out} params={result.model.param_count()} steps={args.iters}")


def cmd_sr(args: argparse.Namespace, run: _Run):
    service = InferenceService(args.model, quantized=args.quantized, expected_scale=args.scale)
    info = service.super_resolve_file(args.input, args.output)
    run.manifest(args.output)
    c, h, w = info['output_shape']
    print(f"output={args.output} shape={c}x{h}x{w} seconds={info['seconds']:.3f}")


def cmd_freq_drop(args: argparse.Namespace, run: _Run):
    model = load_checkpoint(args.model).with_quantizer(None)
    gammas = parse_range(args.gammas) if args.gammas is not None else None
    thetas = parse_int_list(args.thetas) if args.thetas is not None else None
    if gammas is None and thetas is None:
        gammas = parse_range('0:0.8:0.2')
    dataset = _open_source(args.data, args.seed, args.count, args.size)

    curve = FrequencyService().drop_curve(model, dataset, args.mode, gammas=gammas, thetas=thetas)
    write_csv(args.out, [curve.kind, 'ratio'], curve.to_rows(),
              comments=[f"mode={curve.mode} p0={curve.p0:.6f} images={len(dataset)} scale={model.config.scale}"])
    run.manifest(args.out)
    print(format_table([curve.kind, 'ratio'], curve.to_rows()))


def cmd_quantize(args: argparse.Namespace, run: _Run):
    if args.bits not in SUPPORTED_BITS:
        raise QuantizationError(f"bits phải thuộc {SUPPORTED_BITS}, nhận {args.bits}")
    method = 'feature' if args.no_fgo and args.method == 'fgo' else args.method
    if method not in METHODS:
        raise QuantizationError(f"method không hỗ trợ: {args.method}")
    cfg = PtqConfig(
        bits=args.bits,
        method=method,
        epochs=args.epochs,
        batch=args.batch,
        lr=args.lr,
        beta=args.beta,
        per_channel_weights=args.per_channel,
        optimizer=args.optimizer,
        max_workers=config.CRAFT_THREADS,
    )
    model = load_checkpoint(args.model)
    service = QuantizationService(model, cfg)

    size = args.size
    if size is None and args.calib in (SYNTHETIC_SOURCE, SYNTHETIC_HF_SOURCE):
        size = max(config.SYNTHETIC_SIZE, args.patch * model.config.scale)
    dataset = _open_source(args.calib, args.seed, args.count, size)
    calib = service.calibration_set(dataset, n=args.samples, patch=args.patch, seed=args.seed)
    result = service.quantize(calib)

    save_checkpoint(result.model, args.out)
    run.manifest(args.out)
    sites_path = f"{args.out}.sites.csv"
    write_csv(sites_path, ['site', 'kind', 'measure', 'bits', 'channel', 'l', 'u'], service.site_rows(result))
    run.manifest(sites_path)
    loss_path = f"{args.out}.loss.csv"
    loss_rows = service.loss_rows(result, calib)
    write_csv(loss_path, ['stage', 'loss'], loss_rows)
    run.manifest(loss_path)
    print(format_table(['stage', 'loss'], loss_rows))


def cmd_eval(args: argparse.Namespace, run: _Run):
    model = None
    if args.model is not None:
        model = load_checkpoint(args.model)
        if not args.quantized:
            model = model.with_quantizer(None)
        elif model.quantizer is None:
            raise CliError(f"checkpoint {args.model} không có bảng site lượng tử")
    scale = args.scale or (model.config.scale if model is not None else None)
    if scale is None:
        raise CliError("cần --scale khi không có --model")
    if model is not None and scale != model.config.scale:
        raise CliError(f"--scale {scale} không khớp checkpoint (x{model.config.scale})")

    metrics = [m.strip() for m in args.metrics.split(',') if m.strip()]
    service = EvaluationService(scale, protocol=args.protocol, metrics=metrics)
    dataset = _open_source(args.data, args.seed, args.count, args.size)
    reports, mean = service.evaluate(dataset, model=model, pred_dir=args.pred,
                                     baseline=args.baseline == 'bicubic')

    header = ['image'] + metrics
    rows = [[r.names[0] if r.names else str(i)] + [getattr(r, m) for m in metrics] for i, r in enumerate(reports)]
    rows.append(['mean'] + [getattr(mean, m) for m in metrics])
    write_csv(args.out, header, rows, comments=[f"{service.header_note} images={mean.n_images}"])
    run.manifest(args.out)
    print(format_table(header, rows[-1:]))


def cmd_spectrum(args: argparse.Namespace, run: _Run):
    report, residual = FrequencyService().spectrum(args.input, args.compare)
    if residual is None:
        header, rows = ['radius', 'log_amplitude'], report.to_rows()
    else:
        residual_by_radius = dict(residual.to_rows())
        header = ['radius', 'log_amplitude', 'residual']
        rows = [(r, v, residual_by_radius.get(r, 0.0)) for r, v in report.to_rows()]
    write_csv(args.out, header, rows)
    run.manifest(args.out)
    print(f"spectrum={args.out} radii={len(rows)}")


# ================= PARSER =================
def _add_source_flags(parser: argparse.ArgumentParser, name: str, default: str = SYNTHETIC_SOURCE):
    parser.add_argument(f'--{name}', default=default,
                        help=f"thư mục ảnh, '{SYNTHETIC_SOURCE}' hoặc '{SYNTHETIC_HF_SOURCE}'")
    parser.add_argument('--count', type=int, default=None, help='số ảnh tổng hợp')
    parser.add_argument('--size', type=int, default=None, help='cạnh ảnh tổng hợp')
    parser.add_argument('--seed', type=int, default=config.CRAFT_SEED)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='craft', description='Bộ công cụ siêu phân giải CRAFT')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='huấn luyện mô hình')
    _add_source_flags(p, 'data')
    p.add_argument('--scale', type=int, default=2)
    p.add_argument('--iters', type=int, default=2000)
    p.add_argument('--batch', type=int, default=4)
    p.add_argument('--lr', type=float, default=2e-4)
    p.add_argument('--channels', type=int, default=48)
    p.add_argument('--heads', type=int, default=None)
    p.add_argument('--rcrfg', type=int, default=4)
    p.add_argument('--crfb', type=int, default=2)
    p.add_argument('--patch', type=int, default=32, help='cạnh patch LR')
    p.add_argument('--log-every', type=int, default=config.TRAIN_LOG_EVERY)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('sr', help='siêu phân giải một ảnh')
    p.add_argument('--model', required=True)
    p.add_argument('--input', required=True)
    p.add_argument('--output', required=True)
    p.add_argument('--quantized', action='store_true')
    p.add_argument('--scale', type=int, default=None)
    p.set_defaults(handler=cmd_sr)

    p = sub.add_parser('freq-drop', help='đường cong bỏ tần số cao')
    p.add_argument('--model', required=True)
    _add_source_flags(p, 'data')
    p.add_argument('--mode', choices=['D', 'E'], default='D')
    group = p.add_mutually_exclusive_group()
    group.add_argument('--gammas', default=None, help='a:b:step')
    group.add_argument('--thetas', default=None, help='3,5,7,9,11')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_freq_drop)

    p = sub.add_parser('quantize', help='lượng tử hóa sau huấn luyện')
    p.add_argument('--model', required=True)
    _add_source_flags(p, 'calib')
    p.add_argument('--bits', type=int, default=8)
    p.add_argument('--method', default='fgo')
    p.add_argument('--no-fgo', action='store_true', help="tương đương --method feature")
    p.add_argument('--epochs', type=int, default=config.PTQ_EPOCHS)
    p.add_argument('--batch', type=int, default=config.PTQ_BATCH)
    p.add_argument('--lr', type=float, default=None)
    p.add_argument('--beta', type=float, default=config.PTQ_BETA)
    p.add_argument('--samples', type=int, default=config.CALIB_SAMPLES)
    p.add_argument('--patch', type=int, default=config.CALIB_PATCH)
    p.add_argument('--per-channel', action='store_true')
    p.add_argument('--optimizer', choices=['adam', 'sgd'], default='adam')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_quantize)

    p = sub.add_parser('eval', help='đánh giá PSNR / SSIM')
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--model', default=None)
    source.add_argument('--pred', default=None, help='thư mục ảnh SR có sẵn (cùng tên file với HR)')
    source.add_argument('--baseline', choices=['bicubic'], default=None)
    _add_source_flags(p, 'data')
    p.add_argument('--quantized', action='store_true')
    p.add_argument('--scale', type=int, default=None)
    p.add_argument('--metrics', default='psnr,ssim')
    p.add_argument('--protocol', choices=['benchmark', 'toy'], default='benchmark')
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('spectrum', help='phổ log-biên độ theo bán kính')
    p.add_argument('--input', required=True)
    p.add_argument('--compare', default=None)
    p.add_argument('--out', required=True)
    p.set_defaults(handler=cmd_spectrum)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        config.validate_config()
        setup_logging()
        run = _Run(args)
        args.handler(args, run)
        return 0
    except Exception as e:
        logger.debug("Chi tiết lỗi", exc_info=True)
        message = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
