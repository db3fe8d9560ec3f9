import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from umeit.config import SCHEMA, load_config, parse_override, resolve
from umeit.errors import PreconditionError
from umeit.fields import ScalarField, gradient, read_field, read_pgm, write_field, write_pgm
from umeit.geometry import annulus, build_domain, rectangle
from umeit.models import SIGMA_MODELS, illumination, model_parameters, sigma_from_model

names = st.text("abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12)


@given(section=st.sampled_from(sorted(SCHEMA)), key=names)
def test_unknown_keys_rejected(section, key):
    known = set(SCHEMA[section])
    if section == "sigma":
        known |= set(model_parameters("constant"))
    if section == "illumination":
        known |= {"tilt"}
    if key in known:
        return
    with pytest.raises(PreconditionError, match=key):
        resolve({section: {key: "1"}})


@given(section=names)
def test_unknown_sections_rejected(section):
    if section in SCHEMA:
        return
    with pytest.raises(PreconditionError, match=section):
        resolve({section: {}})


def test_defaults_and_types():
    cfg = resolve({})
    assert cfg["domain"]["nx"] == 65 and cfg["noise"]["seed"] == 0
    assert cfg["noise"]["levels"] == [1e-3, 3e-3, 1e-2]
    cfg = load_config(None, ["noise.levels=0.1, 0.2", "output.pgm=no", "sigma.model=gaussian", "sigma.amp=0.5"])
    assert cfg["noise"]["levels"] == [0.1, 0.2]
    assert cfg["output"]["pgm"] is False
    assert cfg.model_params("sigma") == {"amp": 0.5}


@pytest.mark.parametrize("text", ["domain.nx=abc", "noise.seed=-1", "output.pgm=maybe", "sigma.amp=big"])
def test_bad_values_rejected(text):
    overrides = [text] if not text.startswith("sigma") else ["sigma.model=gaussian", text]
    with pytest.raises(PreconditionError):
        load_config(None, overrides)


def test_override_syntax():
    assert parse_override("march.cfl = 0.25") == ("march", "cfl", "0.25")
    with pytest.raises(PreconditionError):
        parse_override("cfl=0.25")


def test_ini_and_manifest_roundtrip(tmp_path):
    cfg = load_config(None, ["domain.kind=slab", "march.cfl=0.3", "noise.levels=1e-3 2e-3", "sigma.model=bump",
                             "sigma.amp=0.125"])
    ini = tmp_path / "run.ini"
    with open(ini, "w") as fh:
        cfg.to_ini().write(fh)
    assert load_config(ini).to_dict() == cfg.to_dict()
    man = tmp_path / "manifest.json"
    man.write_text(json.dumps({"config": cfg.to_dict(), "status": "ok"}))
    assert load_config(man).to_dict() == cfg.to_dict()


def test_every_sigma_model_samples():
    d = build_domain(rectangle(nx=9))
    for name in SIGMA_MODELS:
        s = sigma_from_model(d, name)
        assert s.values.shape == d.grid.shape and np.all(s.values > 0)
    with pytest.raises(PreconditionError):
        sigma_from_model(d, "gaussian", amplitude=1.0)
    with pytest.raises(PreconditionError):
        sigma_from_model(d, "spline")


def test_illuminations():
    d = build_domain(rectangle(nx=9))
    f = illumination(d, "plane", tilt=np.pi / 2)
    assert f(0.3, 0.7) == pytest.approx(0.7)
    with pytest.raises(PreconditionError):
        illumination(d, "radial")
    a = build_domain(annulus(0.5, 1.0, 8))
    vals = illumination(a, "radial", inner=2.0, outer=-1.0)
    assert set(vals[a.boundary.component == 1]) == {2.0}
    assert set(vals[a.boundary.component == 0]) == {-1.0}


def test_field_and_pgm_roundtrip(tmp_path):
    d = build_domain(annulus(0.5, 1.0, 8))
    R, P = d.grid.mesh()
    f = ScalarField(d.grid, R * np.cos(P) + 1e-17 * P)
    write_field(tmp_path / "a.field", f)
    back = read_field(tmp_path / "a.field")
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid.chart == d.grid.chart and back.grid.shape == d.grid.shape
    write_pgm(tmp_path / "a.pgm", f.values)
    img = read_pgm(tmp_path / "a.pgm")
    assert img.shape == f.values.shape and img.min() == 0 and img.max() == 255


def test_gradient_exact_on_quadratics():
    d = build_domain(rectangle(nx=11))
    X, Y = d.grid.mesh()
    g = gradient(ScalarField(d.grid, X ** 2 - 3 * X * Y)).values
    np.testing.assert_allclose(g[..., 0], 2 * X - 3 * Y, atol=1e-10)
    np.testing.assert_allclose(g[..., 1], -3 * X, atol=1e-10)
