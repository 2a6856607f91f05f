import json

import numpy as np
import pytest

from chseg import cli
from chseg.config import PipelineConfig, load_config
from chseg.errors import InputError
from chseg.phantom import Lesion, PhantomSpec
from chseg.volume import BinaryMask, ScalarVolume, read_rvol, write_rvol


@pytest.fixture
def small_phantom(tmp_path):
    spec = PhantomSpec(dims=(40, 36, 32), liver_center=(20, 18, 16), liver_semi_axes=(17, 15, 13),
                       lesions=[Lesion((14, 18, 16), 5), Lesion((27, 20, 16), 4)],
                       noise_sigma=0.05, rng_seed=11)
    spec.save(tmp_path / "spec.json")
    assert cli.main(["phantom", str(tmp_path / "spec.json"), "--out", str(tmp_path / "ph")]) == 0
    return tmp_path / "ph"


def test_phantom_reproducible_bytes(tmp_path, small_phantom):
    assert cli.main(["phantom", str(tmp_path / "spec.json"), "--out", str(tmp_path / "ph2")]) == 0
    for name in ("volume", "liver", "lesions"):
        a = (small_phantom / f"{name}.rvol.raw").read_bytes()
        assert a == (tmp_path / "ph2" / f"{name}.rvol.raw").read_bytes()


def test_segment_outputs(tmp_path, small_phantom, capsys):
    out = tmp_path / "seg"
    code = cli.main(["segment", str(small_phantom / "volume.rvol.json"), str(small_phantom / "liver.rvol.json"),
                     "--gt", str(small_phantom / "lesions.rvol.json"), "--out", str(out), "--slices",
                     "--solver.steps=50"])
    assert code == 0
    for name in ("soft.rvol.json", "hard.rvol.json", "psi.rvol.json", "psi0.rvol.json", "trace.csv",
                 "histogram.csv", "report.json", "metrics.csv", "lesions.csv", "slice_soft.pgm"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["solver"]["steps"] == 50
    assert report["config"]["solver"]["dt"] == pytest.approx(0.0012345679)
    assert report["config"]["histseg"]["eps_soft"] == pytest.approx(6 / 255)
    assert report["config"]["preprocess"]["background_value"] == 0.55
    assert set(report["segmentation"]) == {"peaks", "I0", "eps_soft"}
    assert set(report["preprocess"]) == {"a", "b", "crop_box", "divisor"}
    assert read_rvol(out / "hard.rvol.json").dims == (40, 36, 32)
    assert (out / "trace.csv").read_text().splitlines()[0] == "step,energy,mass"


def test_segment_config_echo_reproduces_run(tmp_path, small_phantom):
    args = [str(small_phantom / "volume.rvol.json"), str(small_phantom / "liver.rvol.json")]
    assert cli.main(["segment", *args, "--out", str(tmp_path / "a"), "--solver.steps=20"]) == 0
    echo = json.loads((tmp_path / "a" / "report.json").read_text())["config"]
    (tmp_path / "echo.json").write_text(json.dumps(echo))
    assert cli.main(["segment", *args, "--out", str(tmp_path / "b"), "--config", str(tmp_path / "echo.json")]) == 0
    for name in ("soft.rvol.raw", "hard.rvol.raw"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_segment_zero_steps_is_plain_threshold(tmp_path, small_phantom):
    from chseg import histseg, preprocess
    from chseg.volume import read_volume

    out = tmp_path / "z"
    assert cli.main(["segment", str(small_phantom / "volume.rvol.json"), str(small_phantom / "liver.rvol.json"),
                     "--out", str(out), "--solver.steps", "0"]) == 0
    vol = read_volume(small_phantom / "volume.rvol.json")
    mask = read_volume(small_phantom / "liver.rvol.json", as_mask=True)
    psi0, chi, rep = preprocess.make_initial_pff(vol, mask)
    direct = histseg.segment(psi0, chi)
    hard = read_volume(out / "hard.rvol.json", as_mask=True).crop(rep.crop_box)
    np.testing.assert_array_equal(hard.bits, direct.hard.bits)


def test_segment_missing_mask(tmp_path, small_phantom, capsys):
    code = cli.main(["segment", str(small_phantom / "volume.rvol.json"), str(tmp_path / "missing.json"),
                     "--out", str(tmp_path / "x")])
    assert code == 2
    assert "missing.json" in capsys.readouterr().err


def test_segment_numerical_failure(tmp_path, small_phantom, capsys):
    code = cli.main(["segment", str(small_phantom / "volume.rvol.json"), str(small_phantom / "liver.rvol.json"),
                     "--out", str(tmp_path / "x"), "--solver.dt=5.0", "--solver.steps=100"])
    assert code == 3
    assert "numerical failure" in capsys.readouterr().err


def test_metrics_pred_equals_gt(small_phantom, capsys):
    gt = str(small_phantom / "lesions.rvol.json")
    assert cli.main(["metrics", gt, gt, str(small_phantom / "liver.rvol.json"), "--id", "case1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "volume_id,dice,sensitivity,specificity,precision,detection_rate"
    assert lines[1] == "case1,1.0,1.0,1.0,1.0,1.0"


def test_solve_step_profile_energy_decays(tmp_path):
    x = np.arange(64)
    field = np.where(x < 32, 0.05, 0.95)[:, None, None] * np.ones((64, 2, 2))
    write_rvol(ScalarVolume(field, domain="phase_field"), tmp_path / "step.json")
    assert cli.main(["solve", str(tmp_path / "step.json"), "--out", str(tmp_path / "s"),
                     "--solver.steps=2000", "--solver.log_every=100", "--threads", "1"]) == 0
    rows = (tmp_path / "s" / "trace.csv").read_text().splitlines()[1:]
    energy = np.array([float(r.split(",")[1]) for r in rows])
    assert len(energy) == 21
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])


def test_histogram_command(tmp_path, capsys):
    data = np.where(np.random.default_rng(4).random((10, 10, 10)) < 0.2, 0.2, 0.7)
    write_rvol(ScalarVolume(data, domain="phase_field"), tmp_path / "psi.json")
    write_rvol(BinaryMask(np.ones((10, 10, 10), bool)), tmp_path / "chi.json")
    assert cli.main(["histogram", str(tmp_path / "psi.json"), str(tmp_path / "chi.json"),
                     "--out", str(tmp_path / "h")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["I0"] == pytest.approx((int(0.2 * 255) + 0.5) / 255)
    assert (tmp_path / "h" / "histogram.csv").exists()


def test_override_precedence(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"solver": {"steps": 10, "epsilon": 4}, "histseg": {"peak_ratio": 0.6}}))
    cfg = load_config(tmp_path / "c.json", {"solver.steps": "5"})
    assert cfg.solver.steps == 5  # flag beats file
    assert cfg.solver.epsilon == 4.0  # file beats default
    assert cfg.histseg.peak_ratio == 0.6
    assert cfg.histseg.hard_threshold == 0.15  # default
    assert load_config().solver.steps == 700


def test_bad_overrides(tmp_path):
    with pytest.raises(InputError):
        load_config(None, {"solver.nope": "1"})
    with pytest.raises(InputError):
        load_config(None, {"nosection.steps": "1"})
    with pytest.raises(InputError):
        load_config(None, {"solver.steps": "many"})
    assert cli.main(["metrics", "a", "b", "--bogus"]) == 2


def test_materialized_defaults():
    doc = PipelineConfig().materialized()
    assert doc["solver"]["dt"] > 0 and doc["histseg"]["eps_soft"] > 0
    assert doc["metrics"] == {"min_overlap": 0.5, "connectivity": 6}
