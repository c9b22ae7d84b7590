import pytest

from leadkd.errors import ConfigurationError, FormatError
from leadkd.pipeline import ExperimentConfig, Experiment, get_config_options, load_config, write_config
from leadkd.pipeline.config import env_overrides, parse_bool, parse_chain


def test_defaults_come_from_the_option_table():
    config = ExperimentConfig()
    for option in get_config_options():
        assert getattr(config, option['name']) == option['values'][0]
    assert config.validate() is config


def test_defaults():
    config = load_config(environ={})
    assert (config.teacher_variant, config.teacher_layers) == ('CB', 4)
    assert (config.student_variant, config.student_layers, config.K) == ('DE', 2, 2)
    assert config.eval_ks == [10, 100]
    assert config.chain == [('DE', 4), ('CB', 4), ('CE', 4)]
    assert config.projection is None


def test_precedence(tmp_path):
    path = tmp_path / 'leadkd.cfg'
    path.write_text('# desk run\nK = 1\nlr = 0.01\ntau = 2.0  # warmer\ndistill_steps = 50\n')
    config = load_config(str(path), overrides={'lr': '0.03', 'tau': None},
                         environ={'LEADKD_LR': '0.02', 'LEADKD_TAU': '3', 'LEADKD_DISTILL_STEPS': '60'})
    assert config.K == 1
    assert config.lr == 0.03
    assert config.tau == 3.0
    assert config.distill_steps == 60


def test_typed_values(tmp_path):
    path = tmp_path / 'leadkd.cfg'
    path.write_text('joint_training = no\neval_ks = 5, 20\nchain = de:2,cb:3\nsweep_ks =\n')
    config = load_config(str(path), environ={})
    assert config.joint_training is False
    assert config.eval_ks == [5, 20]
    assert config.chain == [('DE', 2), ('CB', 3)]
    assert config.sweep_ks == []


def test_parsers():
    assert parse_bool('ON') is True
    assert parse_chain('DE:4, CE:6') == [('DE', 4), ('CE', 6)]
    with pytest.raises(ValueError):
        parse_bool('maybe')


def test_unknown_key(tmp_path):
    path = tmp_path / 'leadkd.cfg'
    path.write_text('K = 1\nlayers = 3\n')
    with pytest.raises(ConfigurationError):
        load_config(str(path), environ={})


def test_malformed_line(tmp_path):
    path = tmp_path / 'leadkd.cfg'
    path.write_text('K = 1\nlr 0.01\n')
    with pytest.raises(FormatError) as info:
        load_config(str(path), environ={})
    assert info.value.lineno == 2


@pytest.mark.parametrize('overrides', [
    {'K': 'two'},
    {'joint_training': 'sometimes'},
    {'teacher_variant': 'XX'},
    {'method': 'PKD'},
    {'strategy': 'Best'},
    {'K': 3},
    {'student_layers': 5},
    {'eval_ks': ''},
    {'seeds': ''},
    {'chain': 'DE:1'},
    {'sweep_ks': '3'},
    {'query_len': 40},
    {'preset': 'huge'},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigurationError):
        load_config(overrides=overrides, environ={})


def test_environment():
    assert env_overrides({'LEADKD_k': '1', 'HOME': '/root'}) == {'K': '1'}
    with pytest.raises(ConfigurationError):
        env_overrides({'LEADKD_LAYERS': '1'})


def test_strategy_is_normalised():
    config = load_config(overrides={'strategy': 'skip(3)', 'teacher_layers': 8}, environ={})
    assert config.strategy == 'Skip'
    assert config.skip_stride == 3
    assert config.distill_config(seed=4).skip_stride == 3


def test_distill_config():
    dcfg = load_config(environ={}).distill_config(seed=7, K=1, joint_training=False)
    assert (dcfg.K, dcfg.seed, dcfg.joint_training, dcfg.strategy) == (1, 7, False, 'Random')


def test_written_config_reloads(tmp_path):
    config = load_config(overrides={'work_dir': str(tmp_path / 'work'), 'lr': '0.0005', 'append_linear': 'true',
                                    'projection_dim': '16', 'chain': 'DE:4,CB:4'}, environ={})
    path = str(tmp_path / 'written.cfg')
    write_config(config, path)
    assert load_config(path, environ={}) == config
    assert config.projection == 16


def test_replace(tiny_config):
    other = tiny_config.replace(K=2, student_layers=2)
    assert (other.K, tiny_config.K) == (2, 1)


class TestPaperPreset:

    def test_values(self):
        config = load_config(preset='paper', environ={})
        assert (config.hidden_dim, config.teacher_layers, config.student_layers, config.K) == (768, 12, 6, 6)
        assert (config.batch_size, config.negative_size) == (80, 16)

    def test_cross_encoder_batches(self):
        config = load_config(overrides={'preset': 'paper', 'teacher_variant': 'CE'}, environ={})
        assert (config.batch_size, config.negative_size) == (16, 15)

    def test_explicit_values_win(self):
        assert load_config(overrides={'preset': 'paper', 'lr': '1e-4'}, environ={}).lr == 1e-4

    def test_experiments_refuse_it(self):
        with pytest.raises(ConfigurationError):
            Experiment(load_config(preset='paper', environ={}))
