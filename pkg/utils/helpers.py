import math
import subprocess
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np


class RangeParseError(ValueError):
    """Chuỗi dải giá trị từ CLI không hợp lệ"""
    pass


def format_float(value: float) -> str:
    """6 chữ số thập phân; vô cực ghi là inf / -inf"""
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if math.isnan(value):
        return "nan"
    return f"{value:.6f}"


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    """CSV xuống dòng LF, số thực 6 chữ số; `comments` thành các dòng '# ...' ở đầu file"""
    path = Path(path)
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write("\n".join(lines) + "\n")
    return path


def parse_range(text: str) -> List[float]:
    """'a:b:step' → [a, a+step, ...] tới b (gồm cả b nếu nằm trên lưới); a == b cho một giá trị"""
    parts = text.split(':')
    if len(parts) != 3:
        raise RangeParseError(f"dải phải có dạng a:b:step, nhận '{text}'")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise RangeParseError(f"dải chứa giá trị không phải số: '{text}'")
    if stop < start:
        raise RangeParseError(f"cần a <= b, nhận '{text}'")
    if start == stop:
        return [start]
    if step <= 0:
        raise RangeParseError(f"step phải dương, nhận '{text}'")
    count = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 10) for i in range(count + 1)]


def parse_int_list(text: str) -> List[int]:
    """'3,5,7' → [3, 5, 7]"""
    try:
        values = [int(p) for p in text.split(',') if p.strip()]
    except ValueError:
        raise RangeParseError(f"danh sách số nguyên không hợp lệ: '{text}'")
    if not values:
        raise RangeParseError("danh sách rỗng")
    return values


def format_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Bảng căn cột để in ra terminal"""
    body = [[_cell(v) for v in row] for row in rows]
    widths = [max([len(h)] + [len(r[i]) for r in body]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines.extend("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in body)
    return "\n".join(lines)


def git_describe() -> str:
    """`git describe --always --dirty` hoặc 'unknown' nếu không có git"""
    try:
        out = subprocess.run(['git', 'describe', '--always', '--dirty'], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).resolve().parent)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"
