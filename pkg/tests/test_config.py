"""Key-value configuration parsing."""

import pytest

from jumpkit import config
from jumpkit.config import ConfigError


def test_parse_scalars_vectors_groups():
    cfg = config.parse_kv_text(
        """
        # robot mass
        mass = 11.4
        leg_lengths = 0.072 0.211 0.2   # trailing comment
        hip_offsets = 0.19 0.049 0, 0.19 -0.049 0
        kind = quadruped
        """
    )
    assert config.scalar(cfg, "mass") == 11.4
    assert config.vector(cfg, "leg_lengths", 3) == [0.072, 0.211, 0.2]
    assert config.groups(cfg, "hip_offsets", 3) == [
        [0.19, 0.049, 0.0],
        [0.19, -0.049, 0.0],
    ]
    assert config.scalar(cfg, "kind") == "quadruped"


def test_blank_lines_and_comment_only_lines_skipped():
    cfg = config.parse_kv_text("\n# only a comment\n\na = 1\n")
    assert list(cfg) == ["a"]


def test_missing_equals_reports_source_and_line():
    with pytest.raises(ConfigError, match=r"robot\.cfg:3"):
        config.parse_kv_text("a = 1\n\nbogus line\n", source="robot.cfg")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate key"):
        config.parse_kv_text("a = 1\na = 2\n")


def test_empty_key_and_empty_value_rejected():
    with pytest.raises(ConfigError, match="empty key"):
        config.parse_kv_text("= 3\n")
    with pytest.raises(ConfigError, match="no value"):
        config.parse_kv_text("a =\n")


def test_scalar_default_and_shape_errors():
    cfg = config.parse_kv_text("v = 1 2 3\n")
    assert config.scalar(cfg, "absent", default=7.0) == 7.0
    with pytest.raises(ConfigError, match="missing key"):
        config.scalar(cfg, "absent")
    with pytest.raises(ConfigError, match="single value"):
        config.scalar(cfg, "v")


def test_vector_shape_and_type_errors():
    cfg = config.parse_kv_text("v = 1 2 3\ng = 1 2, 3 4\ns = a b\n")
    with pytest.raises(ConfigError, match="expected 2 values"):
        config.vector(cfg, "v", 2)
    with pytest.raises(ConfigError, match="one group"):
        config.vector(cfg, "g")
    with pytest.raises(ConfigError, match="numeric"):
        config.vector(cfg, "s")


def test_groups_shape_and_type_errors():
    cfg = config.parse_kv_text("g = 1 2, 3 4, 5\nmixed = 1 a, 2 3\n")
    with pytest.raises(ConfigError, match="groups of 2"):
        config.groups(cfg, "g", 2)
    with pytest.raises(ConfigError, match="numeric"):
        config.groups(cfg, "mixed")
    assert config.groups(cfg, "g") == [[1.0, 2.0], [3.0, 4.0], [5.0]]


def test_parse_kv_file_roundtrip(tmp_path):
    p = tmp_path / "r.cfg"
    p.write_text("mass = 2.5\n")
    cfg = config.parse_kv_file(p)
    assert config.scalar(cfg, "mass") == 2.5
    bad = tmp_path / "bad.cfg"
    bad.write_text("nope\n")
    with pytest.raises(ConfigError, match="bad.cfg:1"):
        config.parse_kv_file(bad)
