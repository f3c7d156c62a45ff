import pytest

from porous_duu.config import RunConfig
from porous_duu.exceptions import ConfigError


class TestLoading:
    def test_defaults_from_empty(self):
        cfg = RunConfig.from_dict({})
        assert cfg.mesh.geometry == "lshape"
        assert cfg.mc.n_samples == 10240
        assert cfg.risk.beta_V_list == [0.0, 10.0, 100.0]

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="nonsense"):
            RunConfig.from_dict({"nonsense": {}})

    def test_unknown_key_rejected_and_named(self):
        with pytest.raises(ConfigError, match="kappa_x"):
            RunConfig.from_dict({"model": {"kappa_x": 1.0}})

    def test_plain_exponent_floats_coerce(self):
        cfg = RunConfig.from_dict({"model": {"h_exchange": "1.0e3"}})
        assert cfg.model.h_exchange == 1000.0

    def test_non_numeric_rejected(self):
        with pytest.raises(ConfigError, match="model.kappa_s"):
            RunConfig.from_dict({"model": {"kappa_s": "abc"}})

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict(
            {"mesh": {"h": 0.25}, "risk": {"N": 7, "seed": 3}}
        )
        path = tmp_path / "cfg.yaml"
        cfg.dump(path)
        again = RunConfig.load(path)
        assert again.to_dict() == cfg.to_dict()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            RunConfig.load(tmp_path / "nope.yaml")


class TestValidation:
    def test_bad_geometry(self):
        with pytest.raises(ConfigError, match="geometry"):
            RunConfig.from_dict({"mesh": {"geometry": "hexagon"}})

    def test_negative_weight(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"risk": {"beta_V": -1.0}})

    def test_negative_sweep_entry(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"risk": {"beta_V_list": [0.0, -1.0]}})

    def test_bad_model_constant(self):
        with pytest.raises(ConfigError, match="model"):
            RunConfig.from_dict({"model": {"mu": -1.0}})

    def test_design_bounds(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"design": {"initial": 1.5}})


class TestAdapters:
    def test_model_params_wiring(self):
        cfg = RunConfig.from_dict(
            {
                "model": {"T_hot": 310.0, "traction": [1.0, -2.0]},
                "risk": {"beta_M": 0.5},
            }
        )
        params = cfg.model_params()
        assert params.bc.T_hot == 310.0
        assert params.bc.traction == (1.0, -2.0)
        assert params.beta_M == 0.5

    def test_build_mesh_square(self):
        cfg = RunConfig.from_dict({"mesh": {"geometry": "square", "nx": 3, "ny": 3}})
        mesh = cfg.build_mesh()
        assert mesh.num_vertices == 16

    def test_build_prior_mean(self):
        cfg = RunConfig.from_dict({"mesh": {"h": 0.5}, "prior": {"mean": 0.1}})
        mesh = cfg.build_mesh()
        prior = cfg.build_prior(mesh)
        assert prior.mean_field.shape == (mesh.num_vertices,)
        assert prior.mean_field[0] == 0.1
