import json

import numpy as np
import pytest

from umeit.cli import EXIT_ABORT, EXIT_OK, EXIT_PRECONDITION, main, run
from umeit.fields import read_field

SLAB = ["domain.kind=slab", "domain.nx=33", "sigma.model=gaussian", "sigma.x0=0.35", "sigma.y0=0"]


def _manifest(outdir):
    return json.loads((outdir / "manifest.json").read_text())


def test_forward_then_reconstruct(tmp_path):
    fwd = tmp_path / "fwd"
    assert main(["forward", "--set", f"output.dir={fwd}"] + sum((["--set", s] for s in SLAB), [])) == EXIT_OK
    man = _manifest(fwd)
    assert man["status"] == "ok" and man["exit_code"] == 0
    assert {"H.field", "u.field", "sigma.field", "trace.csv", "H.pgm"} <= set(man["artifacts"])
    assert abs(man["metrics"]["flux_balance"]) < 1e-8

    rec = tmp_path / "rec"
    code, man = run("reconstruct", overrides=["domain.kind=slab", "domain.nx=33", f"march.input={fwd}",
                                              f"output.dir={rec}"])
    assert code == EXIT_OK
    assert man["metrics"]["sigma_rel_L2"] < 0.02
    assert read_field(rec / "recon_sigma.field").values.shape == (33, 33)


def test_manifest_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run("forward", overrides=SLAB + [f"output.dir={a}"])
    code, _ = run("forward", config=str(a / "manifest.json"), overrides=[f"output.dir={b}"])
    assert code == EXIT_OK
    assert (a / "H.field").read_text() == (b / "H.field").read_text()
    ca, cb = _manifest(a)["config"], _manifest(b)["config"]
    ca["output"].pop("dir"), cb["output"].pop("dir")
    assert ca == cb


def test_config_error_exit_code(tmp_path, caplog):
    assert main(["forward", "--set", "domain.bogus=1", "--set", f"output.dir={tmp_path}"]) == EXIT_PRECONDITION
    assert "bogus" in caplog.text


def test_precondition_exit_code(tmp_path):
    code, man = run("forward", overrides=["sigma.value=0.01", f"output.dir={tmp_path}"])
    assert code == EXIT_PRECONDITION
    assert _manifest(tmp_path)["status"] == "precondition_error"
    assert "sigma" in man["error"]


def test_numerical_abort_writes_failure_log(tmp_path):
    code, man = run("cgo-slab", overrides=["domain.kind=slab", "domain.a=1.5", "domain.nx=64",
                                           "illumination.model=cgo", "sigma.model=bump", f"output.dir={tmp_path}"])
    assert code == EXIT_ABORT
    assert man["status"] == "numerical_abort"
    log = (tmp_path / "failure_log.csv").read_text().splitlines()
    assert log[0] == "key,value" and log[1].startswith("message,")


def test_classify_disc(tmp_path):
    code, man = run("classify", overrides=["domain.kind=disc", "domain.n=32", f"output.dir={tmp_path}"])
    assert code == EXIT_OK and man["metrics"]["null_crossings"] == 4
    rows = (tmp_path / "null_crossings.csv").read_text().splitlines()[1:]
    angles = sorted(float(r.split(",")[3]) for r in rows)
    np.testing.assert_allclose(angles, [45, 135, 225, 315], atol=360 / 64)


def test_bench_threads_identical(tmp_path):
    base = SLAB + ["noise.trials=2", "noise.levels=1e-3 1e-2", "noise.tilts=0 0.3", "noise.holder_s=2"]
    run("bench-stability", overrides=base + [f"output.dir={tmp_path / 's'}"])
    run("bench-stability", overrides=base + [f"output.dir={tmp_path / 't'}"], threads=3)
    for name in ("stability.csv", "tilt.csv", "holder_s2.csv"):
        assert (tmp_path / "s" / name).read_text() == (tmp_path / "t" / name).read_text()


def test_bench_noninjectivity(tmp_path):
    code, man = run("bench-noninjectivity", overrides=["noise.sizes=16 24", f"output.dir={tmp_path}"])
    assert code == EXIT_OK
    assert man["metrics"]["max_square_residual"] < 1e-2
    assert (tmp_path / "disc_singular_values.csv").exists()


def test_annulus_subcommand_requires_annulus(tmp_path):
    code, _ = run("annulus", overrides=[f"output.dir={tmp_path}"])
    assert code == EXIT_PRECONDITION


def test_bad_subcommand():
    with pytest.raises(SystemExit):
        main(["nonsense"])
