import pytest

from bitsdf.config import RunConfig, config_from_dict, load_config, save_config
from bitsdf.errors import ConfigurationError


class TestResolveGrid:
    def test_bounds_round_up_and_pad(self):
        cfg = config_from_dict({
            "grid": {"voxel_size": 0.3, "bounds_min": [0, 0, 0],
                     "bounds_max": [1.0, 0.9, 0.3]},
        })
        dims, origin = cfg.resolve_grid()
        # ceil(1.0/0.3)=4, ceil(0.9/0.3)=3, ceil(0.3/0.3)=1, plus 10 voxels
        # of kernel padding on each side
        assert dims == (24, 23, 21)
        assert origin == (-3.0, -3.0, -3.0)

    def test_explicit_dims(self):
        cfg = config_from_dict({
            "grid": {"dims": [8, 9, 10], "origin": [1, 2, 3]},
        })
        assert cfg.resolve_grid() == ((8, 9, 10), (1.0, 2.0, 3.0))

    def test_dims_without_origin(self):
        cfg = config_from_dict({"grid": {"dims": [8, 9, 10]}})
        with pytest.raises(ConfigurationError):
            cfg.resolve_grid()

    def test_no_geometry_at_all(self):
        with pytest.raises(ConfigurationError):
            RunConfig().resolve_grid()

    def test_empty_bounds_interval(self):
        cfg = config_from_dict({
            "grid": {"bounds_min": [0, 0, 0], "bounds_max": [1, 0, 1]},
        })
        with pytest.raises(ConfigurationError):
            cfg.resolve_grid()


class TestShadowRadius:
    def test_explicit_wins(self):
        cfg = config_from_dict({"kernel": {"shadow_radius": 7}})
        assert cfg.resolved_shadow_radius() == 7.0

    def test_heuristic_tracks_voxel_size(self):
        cfg = config_from_dict({"grid": {"voxel_size": 0.05}})
        assert cfg.resolved_shadow_radius() == 1.0
        cfg.grid.voxel_size = 0.01
        assert cfg.resolved_shadow_radius() == 5.0


class TestValidation:
    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="grid.voxel"):
            config_from_dict({"grid": {"voxel": 0.1}})

    def test_unknown_section(self):
        with pytest.raises(ConfigurationError):
            config_from_dict({"gird": {}})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_config(tmp_path / "none.yaml")

    def test_non_mapping_root(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("- just\n- a list\n")
        with pytest.raises(ConfigurationError):
            load_config(p)


class TestRoundTrip:
    def test_save_load(self, tmp_path):
        cfg = config_from_dict({
            "grid": {"voxel_size": 0.2, "bounds_min": [0, 0, 0],
                     "bounds_max": [4, 4, 2]},
            "kernel": {"shadow_radius": 2, "shadow_model": "cone"},
            "integration": {"t_occ": 3, "compensation": "yaw"},
            "threads": 4,
        })
        p = tmp_path / "c.yaml"
        save_config(cfg, p)
        assert load_config(p) == cfg
