import csv

import numpy as np
import pytest

import main
from dataio.checkpoint import load_checkpoint
from dataio.codecs import load_tensor, save_tensor
from dataio.models import RunManifest

TRAIN_FLAGS = ['--data', 'synthetic', '--count', '2', '--size', '32', '--scale', '2',
               '--channels', '8', '--heads', '2', '--rcrfg', '1', '--crfb', '1',
               '--patch', '16', '--batch', '1', '--iters', '2', '--seed', '5']


def read_rows(path):
    with open(path, newline='') as f:
        return [row for row in csv.reader(f) if row and not row[0].startswith('#')]


def error_lines(err: str):
    return [line for line in err.splitlines() if line.startswith('error:')]


@pytest.fixture(autouse=True)
def quiet_logging(monkeypatch):
    monkeypatch.setattr(main, 'setup_logging', lambda *args, **kwargs: None)


@pytest.fixture(scope='module')
def trained(tmp_path_factory):
    """Checkpoint x2 tí hon huấn luyện 2 bước qua lệnh train"""
    root = tmp_path_factory.mktemp("cli")
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(main, 'setup_logging', lambda *args, **kwargs: None)
        assert main.main(['train', *TRAIN_FLAGS, '--out', str(root / 'model.crft')]) == 0
    return root / 'model.crft'


# ==================================================
# PARSER
# ==================================================
def test_help_exits_zero(capsys):
    assert main.main(['--help']) == 0
    assert 'freq-drop' in capsys.readouterr().out


def test_missing_subcommand_is_usage_error():
    assert main.main([]) == 2


def test_conflicting_sources_is_usage_error(tmp_path):
    code = main.main(['eval', '--model', 'a.crft', '--pred', str(tmp_path), '--out', str(tmp_path / 'e.csv')])
    assert code == 2


def test_invalid_scale_reports_one_error_line(tmp_path, capsys):
    code = main.main(['train', '--scale', '5', '--iters', '1', '--out', str(tmp_path / 'm.crft')])
    assert code == 1
    lines = error_lines(capsys.readouterr().err)
    assert len(lines) == 1
    assert lines[0].startswith('error: CraftConfigError:')
    assert not (tmp_path / 'm.crft').exists()


def test_default_heads():
    assert main._default_heads(48) == 6
    assert main._default_heads(8) == 4
    assert main._default_heads(10) == 2


# ==================================================
# TRAIN / SR
# ==================================================
def test_train_writes_checkpoint_and_loss_log(trained):
    model = load_checkpoint(trained)
    assert model.config.channels == 8 and model.config.scale == 2
    assert trained.with_name('model.crft.manifest').exists()
    loss_rows = read_rows(f"{trained}.loss.csv")
    assert loss_rows[0] == ['step', 'loss']
    assert loss_rows[-1][0] == '2'
    manifest = RunManifest.read(f"{trained}.manifest")
    assert manifest.command == 'train'
    assert manifest.seed == 5
    assert manifest.flags['iters'] == '2'


def test_training_is_deterministic(trained, tmp_path):
    assert main.main(['train', *TRAIN_FLAGS, '--out', str(tmp_path / 'again.crft')]) == 0
    assert (tmp_path / 'again.crft').read_bytes() == trained.read_bytes()


def test_sr_doubles_resolution(trained, tmp_path, rng, capsys):
    lr_path = tmp_path / 'lr.png'
    save_tensor(rng.uniform(0, 1, size=(3, 16, 16)), lr_path)
    out_path = tmp_path / 'sr.png'
    assert main.main(['sr', '--model', str(trained), '--input', str(lr_path), '--output', str(out_path)]) == 0
    assert load_tensor(out_path).shape == (3, 32, 32)
    assert 'shape=3x32x32' in capsys.readouterr().out
    assert (tmp_path / 'sr.png.manifest').exists()


def test_sr_scale_mismatch(trained, tmp_path, rng, capsys):
    lr_path = tmp_path / 'lr.png'
    save_tensor(rng.uniform(0, 1, size=(3, 16, 16)), lr_path)
    code = main.main(['sr', '--model', str(trained), '--input', str(lr_path),
                      '--output', str(tmp_path / 'sr.png'), '--scale', '4'])
    assert code == 1
    assert len(error_lines(capsys.readouterr().err)) == 1


def test_sr_missing_checkpoint(tmp_path, capsys):
    code = main.main(['sr', '--model', str(tmp_path / 'none.crft'), '--input', 'a.png',
                      '--output', str(tmp_path / 'b.png')])
    assert code == 1
    assert error_lines(capsys.readouterr().err)[0].startswith('error: CheckpointError:')


# ==================================================
# EVAL / SPECTRUM / FREQ-DROP
# ==================================================
def test_eval_prediction_against_itself(image_dir, tmp_path):
    out = tmp_path / 'eval.csv'
    code = main.main(['eval', '--pred', str(image_dir), '--data', str(image_dir), '--scale', '2', '--out', str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == ['image', 'psnr', 'ssim']
    assert rows[-1] == ['mean', 'inf', '1.000000']
    assert (tmp_path / 'eval.csv.manifest').exists()


def test_eval_requires_scale_without_model(image_dir, tmp_path, capsys):
    code = main.main(['eval', '--baseline', 'bicubic', '--data', str(image_dir), '--out', str(tmp_path / 'e.csv')])
    assert code == 1
    assert error_lines(capsys.readouterr().err)[0].startswith('error: CliError:')


def test_eval_model_and_baseline(trained, image_dir, tmp_path):
    for flags in (['--model', str(trained)], ['--baseline', 'bicubic', '--scale', '2']):
        out = tmp_path / 'e.csv'
        assert main.main(['eval', *flags, '--data', str(image_dir), '--protocol', 'toy', '--out', str(out)]) == 0
        mean = read_rows(out)[-1]
        assert mean[0] == 'mean'
        assert np.isfinite(float(mean[1]))


def test_spectrum_with_comparison(image_dir, tmp_path):
    out = tmp_path / 'spec.csv'
    image = str(image_dir / 'img0.ppm')
    assert main.main(['spectrum', '--input', image, '--compare', image, '--out', str(out)]) == 0
    rows = read_rows(out)
    assert rows[0] == ['radius', 'log_amplitude', 'residual']
    assert rows[1][0] == '0'
    assert all(row[2] == '0.000000' for row in rows[1:])


def test_freq_drop_zero_gamma(trained, image_dir, tmp_path):
    out = tmp_path / 'drop.csv'
    code = main.main(['freq-drop', '--model', str(trained), '--data', str(image_dir),
                      '--gammas', '0:0:1', '--out', str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows == [['gamma', 'ratio'], ['0.000000', '0.000000']]
    assert out.read_text().startswith('# mode=D')


def test_freq_drop_thetas(trained, image_dir, tmp_path):
    out = tmp_path / 'drop.csv'
    code = main.main(['freq-drop', '--model', str(trained), '--data', str(image_dir), '--mode', 'E',
                      '--thetas', '3,5', '--out', str(out)])
    assert code == 0
    rows = read_rows(out)
    assert rows[0] == ['theta', 'ratio']
    assert [r[0] for r in rows[1:]] == ['3.000000', '5.000000']


# ==================================================
# QUANTIZE
# ==================================================
def test_quantize_writes_sites_and_losses(trained, image_dir, tmp_path, rng):
    out = tmp_path / 'q.crft'
    code = main.main(['quantize', '--model', str(trained), '--calib', str(image_dir), '--bits', '4',
                      '--samples', '2', '--patch', '16', '--epochs', '1', '--out', str(out)])
    assert code == 0
    quantized = load_checkpoint(out)
    assert quantized.quantizer is not None
    assert quantized.quantizer.bits == 4

    sites = read_rows(f"{out}.sites.csv")
    assert sites[0] == ['site', 'kind', 'measure', 'bits', 'channel', 'l', 'u']
    assert {'input', 'output'} <= {row[0] for row in sites[1:]}
    assert all(float(row[5]) <= float(row[6]) for row in sites[1:])
    losses = read_rows(f"{out}.loss.csv")
    assert [r[0] for r in losses[1:]] == ['before', 'after']
    assert float(losses[2][1]) <= float(losses[1][1])
    for suffix in ('', '.sites.csv', '.loss.csv'):
        assert (tmp_path / f"q.crft{suffix}.manifest").exists()

    lr_path = tmp_path / 'lr.png'
    save_tensor(rng.uniform(0, 1, size=(3, 16, 16)), lr_path)
    assert main.main(['sr', '--model', str(out), '--quantized', '--input', str(lr_path),
                      '--output', str(tmp_path / 'sr.png')]) == 0


def test_quantize_rejects_unsupported_bits(trained, image_dir, tmp_path, capsys):
    code = main.main(['quantize', '--model', str(trained), '--calib', str(image_dir), '--bits', '5',
                      '--out', str(tmp_path / 'q.crft')])
    assert code == 1
    lines = error_lines(capsys.readouterr().err)
    assert len(lines) == 1 and lines[0].startswith('error: QuantizationError:')


def test_quantized_flag_requires_sites(trained, tmp_path, rng, capsys):
    lr_path = tmp_path / 'lr.png'
    save_tensor(rng.uniform(0, 1, size=(3, 16, 16)), lr_path)
    code = main.main(['sr', '--model', str(trained), '--quantized', '--input', str(lr_path),
                      '--output', str(tmp_path / 'sr.png')])
    assert code == 1
    assert error_lines(capsys.readouterr().err)[0].startswith('error: InferenceServiceError:')
