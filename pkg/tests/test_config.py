import pytest

from cli import UsageError, build_parser, config_overrides
from etp.Utils.config import load_run_config, merge_config, read_config, PROFILES
from etp.Utils.errors import InputError


@pytest.fixture
def units_only(tmp_path):
    path = tmp_path / "units.toml"
    path.write_text("[units]\nunit_len = 32\n", encoding="utf-8")
    return str(path)


class TestMerge:

    def test_nested_values_replace_leaves(self):
        merged = merge_config({"a": {"x": 1, "y": 2}, "b": 3}, {"a": {"y": 5}})
        assert merged == {"a": {"x": 1, "y": 5}, "b": 3}

    def test_none_is_skipped_at_every_depth(self):
        merged = merge_config({"a": {"x": 1}}, {"a": {"x": None}, "c": {"z": None, "w": 4}, "d": None})
        assert merged == {"a": {"x": 1}, "c": {"w": 4}}

    def test_base_is_not_modified(self):
        base = {"a": {"x": 1}}
        merge_config(base, {"a": {"x": 2}})
        assert base == {"a": {"x": 1}}


class TestLoadRunConfig:

    def test_partial_file_layers_on_the_profile(self, units_only):
        desk = read_config(PROFILES["desk"])
        config = load_run_config("desk", units_only, {"basic": {"seed": None, "threads": None}})
        assert config.units.unit_len == 32
        assert config.refinement.iterations == desk["refinement"]["iterations"]
        assert config.localization.iterations == desk["localization"]["iterations"]
        assert config.basic.threads == desk["basic"]["threads"]

    def test_overrides_for_sections_the_file_lacks(self, units_only):
        config = load_run_config("desk", units_only, {"basic": {"seed": 7, "threads": None},
                                                      "actionness": {"threshold": 0.4, "min_len": None}})
        assert config.basic.seed == 7
        assert config.actionness.threshold == 0.4

    @pytest.mark.parametrize("name", ["paper", "full"])
    def test_paper_profile(self, name):
        config = load_run_config(name)
        assert config.refinement.hidden == 512
        assert config.refinement.iterations == 20000
        assert config.localization.iterations == 90000
        assert config.units.unit_len == 64

    def test_unknown_profile(self):
        with pytest.raises(InputError):
            load_run_config("huge")

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            load_run_config("desk", str(tmp_path / "none.toml"))


class TestFlags:

    def parse(self, argv):
        args = build_parser().parse_args(argv)
        return load_run_config(args.profile, args.config, config_overrides(args))

    def test_actionness_fields(self, tmp_path):
        config = self.parse(["actionness", "--scores", str(tmp_path), "--out", str(tmp_path),
                             "--threshold", "0.6", "--min-len", "4", "--max-len", "300",
                             "--smooth-sigma", "1.5", "--nms-threshold", "0.5"])
        a = config.actionness
        assert (a.threshold, a.min_len, a.max_len, a.smooth_sigma, a.nms_threshold) == (0.6, 4, 300, 1.5, 0.5)

    def test_training_fields(self, tmp_path):
        config = self.parse(["pipeline", "--data", str(tmp_path), "--out", str(tmp_path), "--seed", "3",
                             "--unit-len", "16", "--stride", "4", "--rn-batch-size", "8", "--rn-iterations", "10",
                             "--rn-learning-rate", "0.01", "--rn-momentum", "0.5", "--rn-decay-factor", "0.5",
                             "--rn-decay-every", "5", "--ln-batch-size", "4", "--ln-iterations", "20",
                             "--ln-learning-rate", "0.2", "--alpha", "0.3", "--beta", "0.0", "--no-non-local"])
        assert (config.units.unit_len, config.units.stride) == (16, 4)
        rn = config.refinement
        assert (rn.batch_size, rn.iterations, rn.learning_rate, rn.momentum, rn.decay_factor, rn.decay_every) == \
            (8, 10, 0.01, 0.5, 0.5, 5)
        ln = config.localization
        assert (ln.batch_size, ln.iterations, ln.learning_rate, ln.alpha, ln.beta, ln.non_local) == \
            (4, 20, 0.2, 0.3, 0.0, False)
        assert config.basic.seed == 3

    def test_unset_flags_keep_profile_values(self):
        desk = read_config(PROFILES["desk"])
        config = self.parse(["train-ln", "--annotations", "a", "--features", "f", "--proposals", "p",
                             "--out", "o", "--seed", "0"])
        assert config.localization.alpha == desk["localization"]["alpha"]
        assert config.localization.non_local is True

    def test_flags_are_scoped_to_their_commands(self):
        with pytest.raises(UsageError):
            build_parser().parse_args(["actionness", "--scores", "s", "--out", "o", "--alpha", "0.2"])
