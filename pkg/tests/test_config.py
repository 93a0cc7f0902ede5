import pytest

from config import Config, ConfigError, env_overrides, load_config, params_from, read_yaml
from nav.mcl import MclParams


class TestLayering:
    def test_default_file_is_loaded(self, default_config):
        assert default_config.get('nav.mcl.n_particles') == 300

    def test_file_layer_overrides_default(self, tmp_path):
        layer = tmp_path / 'layer.yaml'
        layer.write_text('nav:\n  mcl:\n    n_particles: 1200\n')
        cfg = load_config([layer], env={})
        assert cfg.get('nav.mcl.n_particles') == 1200
        # untouched siblings survive the merge
        assert cfg.get('nav.mcl.z_hit') == load_config(env={}).get('nav.mcl.z_hit')

    def test_env_overrides_file_layer(self, tmp_path):
        layer = tmp_path / 'layer.yaml'
        layer.write_text('nav:\n  mcl:\n    n_particles: 1200\n')
        cfg = load_config([layer], env={'PLANTSIM__NAV__MCL__N_PARTICLES': '800'})
        assert cfg.get('nav.mcl.n_particles') == 800

    def test_env_values_are_parsed(self):
        data = env_overrides({'PLANTSIM__RUNNER__MODE': 'processes',
                              'PLANTSIM__BUS__DROP': '0.1',
                              'PLANTSIM__SIM__FLAG': 'true',
                              'UNRELATED': 'x'})
        assert data == {'runner': {'mode': 'processes'}, 'bus': {'drop': 0.1}, 'sim': {'flag': True}}

    def test_without_default_file(self):
        assert load_config(env={}, use_default_file=False).to_dict() == {}


class TestReadYaml:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match='not found'):
            read_yaml(tmp_path / 'missing.yaml')

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / 'bad.yaml'
        path.write_text('nav: [unclosed\n')
        with pytest.raises(ConfigError, match='not valid YAML'):
            read_yaml(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / 'list.yaml'
        path.write_text('- 1\n- 2\n')
        with pytest.raises(ConfigError, match='mapping'):
            read_yaml(path)


class TestConfig:
    def test_get_and_set(self):
        cfg = Config({'a': {'b': 1}})
        cfg.set('a.c.d', 5)
        assert cfg.get('a.c.d') == 5
        assert cfg.get('a.b') == 1
        assert cfg.get('a.x', 'default') == 'default'

    def test_set_through_a_value_fails(self):
        cfg = Config({'a': {'b': 1}})
        with pytest.raises(ConfigError):
            cfg.set('a.b.c', 2)

    def test_section_of_a_value_fails(self):
        cfg = Config({'a': {'b': 1}})
        with pytest.raises(ConfigError, match='not a mapping'):
            cfg.section('a.b')

    def test_missing_section_is_empty(self):
        assert Config().section('nav.mcl') == {}

    def test_merged_leaves_original_untouched(self):
        cfg = Config({'a': {'b': 1, 'c': 2}})
        merged = cfg.merged({'a': {'b': 10}})
        assert merged.get('a.b') == 10 and merged.get('a.c') == 2
        assert cfg.get('a.b') == 1


class TestParamsFrom:
    def test_builds_dataclass(self):
        params = params_from(MclParams, {'n_particles': 42}, z_hit=0.8)
        assert params.n_particles == 42
        assert params.z_hit == 0.8

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match='unknown keys for MclParams: n_particle'):
            params_from(MclParams, {'n_particle': 42})

    def test_every_default_section_is_accepted(self, default_config):
        from agents.robot_agent import RobotSetup, world_params
        RobotSetup.from_config(default_config)
        world_params(default_config)
