import pytest

from relm.config import ConfigError, RelmConfig, load_config, parse_config


def test_defaults():
    cfg = RelmConfig()
    assert cfg.topology.hidden == (45, 15, 6)
    assert cfg.environment.new_fraction == 0.5
    assert cfg.environment.capacity_periods == 4
    assert cfg.evaluator.psi_recalibrate == 0.25
    assert cfg.sigma_restart == pytest.approx(0.3 * cfg.cmaes.sigma0)


def test_parse_and_coerce():
    cfg = parse_config("""
        # comment
        cmaes.sigma0 = 0.25
        cmaes.popsize = 12   # trailing comment
        cmaes.target_fitness = none
        environment.stratify = yes
        topology.hidden = 8, 4
        ingest.discrete = a, b
        recalibration.sigma_restart = 0.1
    """)
    assert cfg.cmaes.sigma0 == 0.25 and cfg.cmaes.popsize == 12
    assert cfg.cmaes.target_fitness is None
    assert cfg.environment.stratify is True
    assert cfg.topology.hidden == (8, 4)
    assert cfg.ingest.discrete == ("a", "b")
    assert cfg.sigma_restart == 0.1


@pytest.mark.parametrize("text", ["nosuch.key = 1", "cmaes.nosuch = 1", "cmaes = 1",
                                  "cmaes.sigma0 = abc", "environment.stratify = maybe",
                                  "just words"])
def test_bad_lines(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_round_trip_through_text():
    cfg = RelmConfig()
    cfg.set("latent.mute", "true")
    cfg.set("cmaes.seed", "7")
    back = parse_config(cfg.to_text())
    assert back == cfg


def test_load_with_overrides(tmp_path):
    path = tmp_path / "relm.cfg"
    path.write_text("cmaes.seed = 3\ncmaes.max_generations = 9\n")
    cfg = load_config(path, {"cmaes.seed": "11"})
    assert cfg.cmaes.seed == 11 and cfg.cmaes.max_generations == 9
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(tmp_path / "missing.cfg")
