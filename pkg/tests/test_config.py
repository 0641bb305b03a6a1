import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from feds3a.config import (
    BASELINES,
    FIELD_NAMES,
    ExperimentConfig,
    apply_baseline,
    dump_yaml,
    echo,
    parse_and_validate,
    parse_override,
    resolve,
)
from feds3a.errors import ConfigurationError, ValidationError


def test_defaults_match_table_iv():
    cfg = resolve(ExperimentConfig())
    # published default hyperparameters
    assert (cfg.lr, cfg.batch_size, cfg.epochs, cfg.threshold) == (1e-4, 100, 1, 0.95)
    assert (cfg.c_fraction, cfg.tau, cfg.n_clients, cfg.rounds) == (0.6, 2, 10, 50)
    assert cfg.quorum == 6
    assert cfg.f_beta == pytest.approx(1 / 7)


@pytest.mark.parametrize("c,m,q", [(0.6, 10, 6), (0.1, 10, 1), (0.4, 5, 2), (0.35, 10, 4), (1.0, 7, 7)])
def test_quorum_is_ceiling(c, m, q):
    assert ExperimentConfig(c_fraction=c, n_clients=m).quorum == q


def test_out_of_range_names_field(tmp_path):
    with pytest.raises(ValidationError, match="c_fraction: must be in \\(0, 1\\]"):
        parse_and_validate(overrides={"c_fraction": 1.5})
    with pytest.raises(ValidationError, match="tau"):
        parse_and_validate(overrides={"tau": -1})


def test_unknown_field_rejected():
    with pytest.raises(ValidationError, match="bogus"):
        parse_and_validate(overrides={"bogus": 1})


def test_bad_function_parameter_rejected():
    with pytest.raises(ConfigurationError):
        parse_and_validate(overrides={"staleness": "exponential", "staleness_a": 0.5})


def test_empty_and_missing_file(tmp_path):
    empty = tmp_path / "e.yaml"
    empty.write_text("")
    assert parse_and_validate(empty) == resolve(ExperimentConfig())
    with pytest.raises(OSError):
        parse_and_validate(tmp_path / "nope.yaml")


def test_yaml_overrides_and_cli_precedence(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("tau: 3\nc_fraction: 0.4\nhidden: [16, 8]\n")
    cfg = parse_and_validate(p, {"tau": 1})
    assert cfg.tau == 1 and cfg.c_fraction == 0.4 and cfg.hidden == (16, 8)


def test_parse_override():
    assert parse_override("c-fraction=0.4") == ("c_fraction", 0.4)
    assert parse_override("adaptive_lr=false") == ("adaptive_lr", False)
    with pytest.raises(ValidationError):
        parse_override("tau")


@pytest.mark.parametrize("baseline", BASELINES)
def test_echo_round_trips(tmp_path, baseline):
    cfg = parse_and_validate(overrides={"baseline": baseline})
    path = echo(cfg, tmp_path)
    again = parse_and_validate(path)
    assert again == cfg
    assert set(yaml.safe_load(path.read_text())) == set(FIELD_NAMES)


@pytest.mark.parametrize("baseline", BASELINES)
def test_apply_baseline_idempotent(baseline):
    once = apply_baseline(ExperimentConfig(baseline=baseline))
    assert apply_baseline(once) == once
    cfg = resolve(ExperimentConfig(baseline=baseline))
    assert resolve(cfg) == cfg


def test_baseline_settings():
    fa = resolve(ExperimentConfig(baseline="fedavg-all"))
    assert (fa.c_fraction, fa.tau, fa.n_groups, fa.transport, fa.adaptive_lr) == (1.0, 0, 1, "dense", False)
    asy = resolve(ExperimentConfig(baseline="fedasync"))
    assert asy.quorum == 1 and asy.staleness == "polynomial" and asy.staleness_a == 0.5


@given(st.floats(0.05, 1.0), st.integers(0, 6), st.integers(2, 20))
def test_resolve_is_idempotent(c, tau, m):
    cfg = resolve(ExperimentConfig(c_fraction=c, tau=tau, n_clients=m))
    assert resolve(cfg) == cfg
    assert dump_yaml(resolve(cfg)) == dump_yaml(cfg)
