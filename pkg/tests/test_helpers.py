import math

import numpy as np
import pytest

from config import Config
from utils.helpers import (RangeParseError, format_float, format_table, git_describe, parse_int_list,
                           parse_range, write_csv)
from utils.seeding import SeedStreams


# ==================================================
# RANGES
# ==================================================
def test_parse_range_inclusive():
    assert parse_range('0:1:0.25') == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_range('0.1:0.9:0.2') == [0.1, 0.3, 0.5, 0.7, 0.9]


def test_parse_range_single_value():
    assert parse_range('0.5:0.5:0') == [0.5]
    assert parse_range('0:0:1') == [0.0]


def test_parse_range_stops_before_off_grid_end():
    assert parse_range('0:1:0.3') == [0.0, 0.3, 0.6, 0.9]


@pytest.mark.parametrize("text", ['1:0:1', 'a:b:c', '0:1', '0:1:0', '0:1:-0.5'])
def test_parse_range_errors(text):
    with pytest.raises(RangeParseError):
        parse_range(text)


def test_parse_int_list():
    assert parse_int_list('3,5,7') == [3, 5, 7]
    with pytest.raises(RangeParseError):
        parse_int_list('3,x')
    with pytest.raises(RangeParseError):
        parse_int_list('')


# ==================================================
# OUTPUT FORMATTING
# ==================================================
def test_format_float():
    assert format_float(1.0 / 3.0) == "0.333333"
    assert format_float(math.inf) == "inf"
    assert format_float(-math.inf) == "-inf"
    assert format_float(math.nan) == "nan"


def test_write_csv_uses_lf_and_fixed_precision(tmp_path):
    path = write_csv(tmp_path / "out.csv", ['name', 'psnr'],
                     [('a', math.inf), ('b', np.float32(30.5)), ('c', 3)], comments=['scale=2'])
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    assert raw.decode('utf-8') == "# scale=2\nname,psnr\na,inf\nb,30.500000\nc,3\n"


def test_format_table_aligns_columns():
    text = format_table(['gamma', 'ratio'], [(0.0, 0.1), (0.5, 0.25)])
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[1].startswith("--------")
    assert lines[2].split() == ['0.000000', '0.100000']


def test_git_describe_returns_text():
    assert isinstance(git_describe(), str)
    assert git_describe()


# ==================================================
# SEEDS
# ==================================================
def test_seed_streams_are_reproducible():
    a = SeedStreams(42).generator('train', 3).random(4)
    b = SeedStreams(42).generator('train', 3).random(4)
    np.testing.assert_array_equal(a, b)


def test_seed_streams_are_independent():
    streams = SeedStreams(42)
    base = streams.generator('train', 0).random(4)
    assert not np.array_equal(base, streams.generator('train', 1).random(4))
    assert not np.array_equal(base, streams.generator('calibration', 0).random(4))
    assert not np.array_equal(base, SeedStreams(43).generator('train', 0).random(4))


def test_seed_is_masked_to_64_bits():
    assert SeedStreams(-1).seed == 2 ** 64 - 1
    assert "seed=" in repr(SeedStreams(1))


# ==================================================
# CONFIG
# ==================================================
def test_default_config_is_valid():
    assert Config.validate_config() is True


def test_validate_config_collects_errors(monkeypatch):
    monkeypatch.setattr(Config, 'PTQ_BETA', 1.0)
    monkeypatch.setattr(Config, 'PTQ_EPOCHS', -1)
    with pytest.raises(ValueError) as exc:
        Config.validate_config()
    message = str(exc.value)
    assert 'PTQ_BETA' in message and 'PTQ_EPOCHS' in message
