import json

import pytest

from drfagent.config import SCHEMA_VERSION, Config
from drfagent.errors import BadInput
from drfagent.risk_field import Convention


def test_defaults():
    cfg = Config()
    assert cfg.drf.p == 0.0064 and cfg.drf.t_la == 5.0
    assert (cfg.drf.m, cfg.drf.k_inner, cfg.drf.k_outer) == (0.05, 0.2, 1.14)
    assert (cfg.grid.ahead, cfg.grid.behind, cfg.grid.half_width, cfg.grid.resolution) == (160, 40, 30, 0.5)
    assert (cfg.scene.radius, cfg.scene.cap) == (50.0, 8)
    assert cfg.convention is Convention.AREA_INTEGRAL
    assert cfg.agent.shots_for("roundabout") == 2 and cfg.agent.shots_for("highway") == 3


def test_round_trip(tmp_path):
    cfg = Config().with_agent(risk_emphasis="high", max_retries=4).replace(seed=9)
    cfg.save(tmp_path / "c.json")
    assert Config.load(tmp_path / "c.json") == cfg


def test_document_is_versioned(tmp_path):
    Config().save(tmp_path / "c.json")
    assert json.loads((tmp_path / "c.json").read_text())["schema_version"] == SCHEMA_VERSION


def test_partial_document_fills_defaults():
    cfg = Config.from_dict({"agent": {"memory_enabled": False}, "drf": {"t_la": 3.0}})
    assert not cfg.agent.memory_enabled and cfg.agent.risk_enabled and cfg.drf.t_la == 3.0


@pytest.mark.parametrize(
    "doc",
    [
        {"schema_version": 2},
        {"nonsense": 1},
        {"agent": {"colour": "red"}},
        {"agent": {"risk_emphasis": "extreme"}},
        {"backend": {"kind": "telepathy"}},
        {"oracle": {"dt": 0}},
        {"convention": "Sideways"},
        {"scene": []},
    ],
)
def test_bad_documents(doc):
    with pytest.raises(BadInput):
        Config.from_dict(doc)


def test_unreadable_file(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(BadInput):
        Config.load(tmp_path / "c.json")
    with pytest.raises(BadInput):
        Config.load(tmp_path / "missing.json")
