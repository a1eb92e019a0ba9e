import json

import pytest

from levyscale.errors import ModelError
from levyscale.gallery import (
    GALLERY,
    build_model,
    gallery_configs,
    gallery_model,
    load_model_file,
    read_density_table,
)
from levyscale.levy_model import AtomicJumps, NoJumps, psi


@pytest.mark.parametrize("name", list(GALLERY) + ["atomic_claims"])
def test_gallery_models_build(name):
    m = gallery_model(name)
    assert m.name == name
    assert abs(psi(m, 0.0)) < 1e-14 if not isinstance(m.jumps, AtomicJumps) else True


def test_gallery_configs_carry_names():
    assert set(gallery_configs()) == set(GALLERY)
    assert all(v["name"] == k for k, v in gallery_configs().items())


def test_unknown_gallery_name():
    with pytest.raises(ModelError):
        gallery_model("nope")


@pytest.mark.parametrize("cfg", [
    {"family": "brownian", "params": {"sigma": -1.0}},
    {"family": "cramer_lundberg_exp", "params": {"c": 1.0, "lambda": 1.0}},
    {"family": "piecewise_power", "params": {"lam1": 2.5, "lam2": 0.5}},
    {"family": "piecewise_power", "params": {"lam1": 0.5, "lam2": 1.5}},
    {"family": "piecewise_exp", "params": {"lam": 1.5, "delta": 1.0}},
    {"family": "atomic_claims", "params": {"delta": 1.0, "atoms": [[1.0]]}},
    {"family": "martian", "params": {}},
    {"family": "brownian", "params": {"sigma": 1.0}, "tolerances": {"hjb_rel": 0}},
    {"params": {"sigma": 1.0}},
])
def test_schema_rejections(cfg):
    with pytest.raises(ModelError) as info:
        build_model(cfg)
    assert info.value.stage == "parse"


def test_brownian_defaults():
    m = build_model({"family": "brownian"})
    assert isinstance(m.jumps, NoJumps) and m.sigma == 1.0 and m.gamma == 0.0


def test_density_table_and_yaml(tmp_path):
    (tmp_path / "d.csv").write_text("x,pi\n0,2.0\n1,0.8\n3,0.1\n")
    (tmp_path / "m.yaml").write_text("family: custom_density_table\nparams:\n  table: d.csv\n  delta: 4.0\n")
    m, cfg = load_model_file(tmp_path / "m.yaml")
    assert cfg["family"] == "custom_density_table"
    assert m.is_bounded_variation and m.bv_drift == pytest.approx(4.0)
    assert float(m.jumps.density(1.0)) == pytest.approx(0.8, rel=1e-12)
    assert float(m.jumps.density(0.5)) == pytest.approx((2.0 * 0.8) ** 0.5, rel=1e-12)


def test_density_table_errors(tmp_path):
    (tmp_path / "one.csv").write_text("0,1\n")
    with pytest.raises(ModelError):
        read_density_table(tmp_path / "one.csv")
    (tmp_path / "bad.csv").write_text("0,1\n1,oops\n")
    with pytest.raises(ModelError):
        read_density_table(tmp_path / "bad.csv")
    (tmp_path / "m.yaml").write_text("family: custom_density_table\nparams: {table: missing.csv, delta: 1}\n")
    with pytest.raises(ModelError):
        load_model_file(tmp_path / "m.yaml")


def test_json_model_file(tmp_path):
    p = tmp_path / "cl.json"
    p.write_text(json.dumps(GALLERY["cramer_lundberg_exp"]))
    m, _ = load_model_file(p)
    assert m.bv_drift == pytest.approx(1.0)


def test_unreadable_files(tmp_path):
    with pytest.raises(ModelError):
        load_model_file(tmp_path / "absent.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ModelError):
        load_model_file(tmp_path / "list.yaml")
    (tmp_path / "broken.yaml").write_text("family: [unclosed\n")
    with pytest.raises(ModelError):
        load_model_file(tmp_path / "broken.yaml")
