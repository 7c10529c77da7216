"""Config parsing, defaults, validation, and scenario wiring."""

import math

import pytest

from swarmheal.adversary import EXTERNAL, INTERNAL, ISLAND, NONE, UNIFORM
from swarmheal.config import (
    ConfigError,
    ScenarioConfig,
    build_scenario,
    build_topology,
    describe,
    parse_config,
    parse_seeds,
)


class TestDefaults:
    def test_empty_config_is_the_headline_experiment(self):
        cfg = parse_config(None, [])
        assert cfg.topology == "mesh"
        assert cfg.nodes == 1024
        assert cfg.adversary == INTERNAL
        assert cfg.frac_initial == 0.30
        assert cfg.configuration == "C0"
        assert cfg.internal_rate == 1 / 100
        assert cfg.lam == 1 / 100
        assert cfg.lam_max == 1 / 100
        assert cfg.lam_min == 1 / 400
        assert cfg.ttl == 1
        assert cfg.update_time == 500.0
        assert cfg.duration == 1000.0
        assert cfg.seeds == tuple(range(10))
        assert cfg.chunk_count == 64 and cfg.chunk_size == 256

    def test_external_defaults(self):
        cfg = parse_config(None, ["adversary=external"])
        assert cfg.frac_initial == 0.0
        assert cfg.external_rate == 1 / 100
        assert cfg.external_disconnect == 300.0
        assert cfg.update_time == 700.0

    def test_quiet_network_has_no_default_update(self):
        cfg = parse_config(None, ["adversary=none"])
        assert cfg.update_time is None

    def test_default_update_drops_out_of_short_runs(self):
        cfg = parse_config(None, ["duration=300"])
        assert cfg.update_time is None

    def test_explicit_update_beyond_duration_rejected(self):
        with pytest.raises(ConfigError, match="update_at"):
            parse_config(None, ["duration=300", "update_at=500"])

    def test_mesh_side_scales_with_density(self):
        cfg = parse_config(None, ["nodes=256"])
        assert math.isclose(cfg.mesh_side_m, 2000.0)
        assert math.isclose(parse_config(None, []).mesh_side_m, 4000.0)


class TestParsing:
    def test_file_and_override_precedence(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("ttl = 0\nduration = 800\n# comment\n\nseeds = 0..2\n")
        cfg = parse_config(str(path), ["ttl=4"])
        assert cfg.ttl == 4  # flag beats file
        assert cfg.duration == 800.0
        assert cfg.seeds == (0, 1, 2)

    def test_fraction_syntax(self):
        cfg = parse_config(None, ["lambda_min=1/500", "lambda=1/200"])
        assert cfg.lam_min == 1 / 500
        assert cfg.lam == 1 / 200

    def test_seeds_forms(self):
        assert parse_seeds("seeds", "0..3") == (0, 1, 2, 3)
        assert parse_seeds("seeds", "7") == (7,)
        assert parse_seeds("seeds", "3,1,9") == (3, 1, 9)
        with pytest.raises(ConfigError, match="seeds"):
            parse_seeds("seeds", "1,1")
        with pytest.raises(ConfigError, match="seeds"):
            parse_seeds("seeds", "5..3")

    def test_unknown_key_named_in_error(self):
        with pytest.raises(ConfigError, match="wavelength"):
            parse_config(None, ["wavelength=3"])

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match="nodes"):
            parse_config(None, ["nodes=many"])

    def test_malformed_line_rejected(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("just a line\n")
        with pytest.raises(ConfigError):
            parse_config(str(path), [])

    def test_update_off_switch(self):
        assert parse_config(None, ["update=off"]).update_time is None
        assert parse_config(None, ["update_at=off"]).update_at is None

    def test_boolean_forms(self):
        assert parse_config(None, ["bogus_responders=yes"]).bogus_responders
        assert not parse_config(None, ["bogus_responders=off"]).bogus_responders


class TestValidation:
    def test_negative_ttl_rejected(self):
        with pytest.raises(ConfigError, match="ttl"):
            parse_config(None, ["ttl=-1"])

    def test_island_with_external_rejected(self):
        with pytest.raises(ConfigError, match="configuration"):
            parse_config(None, ["adversary=external", "configuration=C1"])

    def test_nonzero_f_with_external_rejected(self):
        with pytest.raises(ConfigError, match="f"):
            parse_config(None, ["adversary=external", "f=0.3"])

    def test_rate_ordering_enforced(self):
        with pytest.raises(ConfigError, match="lambda"):
            parse_config(None, ["lambda_min=1/50"])  # min above init

    def test_unknown_topology_rejected(self):
        with pytest.raises(ConfigError, match="topology"):
            parse_config(None, ["topology=ring"])

    def test_unknown_adversary_rejected(self):
        with pytest.raises(ConfigError, match="adversary"):
            parse_config(None, ["adversary=quantum"])


class TestWiring:
    def test_scenario_carries_config_choices(self):
        cfg = parse_config(None, [
            "nodes=63", "topology=btree", "ttl=4", "theta=0.5", "delta_cap=2",
            "threshold_selfcheck=50", "configuration=C1", "kappa=3",
            "chunk_count=16", "chunk_size=32", "link_delay_ms=10",
            "update_at=200", "duration=400", "new_version=7",
        ])
        sc = build_scenario(cfg)
        assert sc.topology.n == 63
        assert sc.params.ttl == 4
        assert sc.params.theta == 0.5
        assert sc.params.delta_cap == 2
        assert sc.params.selfcheck_cap == 50.0
        assert sc.adversary.placement == ISLAND
        assert sc.adversary.kappa == 3
        assert sc.image.chunk_count == 16 and sc.image.chunk_size == 32
        assert sc.mean_link_delay == 0.010
        assert sc.update.at == 200.0 and sc.update.new_version == 7
        assert sc.duration == 400.0

    def test_btree_and_ttree_shapes(self):
        b = build_topology(parse_config(None, ["topology=btree", "nodes=7"]))
        t = build_topology(parse_config(None, ["topology=ttree", "nodes=13"]))
        assert max(len(a) for a in b.adj) == 3  # root 2 children, inner 3 links
        assert max(len(a) for a in t.adj) == 4

    def test_topology_seed_reproduces_mesh(self):
        cfg = parse_config(None, ["nodes=64", "area_side_m=1000", "range_m=220"])
        a = build_topology(cfg)
        b = build_topology(cfg)
        assert a.pos == b.pos and a.adj == b.adj

    def test_describe_lists_resolved_values(self):
        text = describe(parse_config(None, []))
        assert "resolved frac_initial = 0.3" in text
        assert "resolved update_time = 500.0" in text
