import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from pdckit import (
    GeneratorSpec,
    default_config,
    read_recording_csv,
    write_config_json,
    write_generator_spec_json,
)
from pdckit.cli import main
from pdckit.pdc import read_spectrum_csv
from pdckit.var import read_model_json


def _gen_spec_file(tmp_path, coeffs=None, n=800, seed=12, name="gen.json"):
    coeffs = np.array([[[0.3, 0.0], [0.4, 0.3]]]) if coeffs is None else coeffs
    spec = GeneratorSpec(
        coeff_matrices=coeffs,
        innovation_covariance=np.eye(coeffs.shape[1]),
        n_samples=n,
        seed=seed,
        sampling_rate_hz=250.0,
    )
    path = tmp_path / name
    write_generator_spec_json(spec, path)
    return path


def _simulate(tmp_path, name="rec.csv", **kw):
    spec = _gen_spec_file(tmp_path, **kw)
    out = tmp_path / name
    assert main(["simulate", "--spec", str(spec), "--out", str(out)]) == 0
    return out


# ------------------------------------------------------------------ commands


def test_simulate_writes_deterministic_recording(tmp_path, capsys):
    rec_path = _simulate(tmp_path)
    rec = read_recording_csv(rec_path, sampling_rate_hz=250.0)
    assert rec.samples.shape == (800, 2)
    first = rec_path.read_bytes()
    assert main(["simulate", "--spec", str(_gen_spec_file(tmp_path)),
                 "--out", str(rec_path)]) == 0
    assert rec_path.read_bytes() == first
    capsys.readouterr()


def test_simulate_seed_override_changes_output(tmp_path, capsys):
    spec = _gen_spec_file(tmp_path)
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--spec", str(spec), "--out", str(out1)]) == 0
    assert main(["simulate", "--spec", str(spec), "--out", str(out2),
                 "--seed", "999"]) == 0
    a = read_recording_csv(out1, sampling_rate_hz=250.0)
    b = read_recording_csv(out2, sampling_rate_hz=250.0)
    assert np.any(a.samples != b.samples)
    capsys.readouterr()


def test_fit_fixed_and_auto_order(tmp_path, capsys):
    rec = _simulate(tmp_path, n=1500)
    model_path = tmp_path / "model.json"
    assert main(["fit", "--input", str(rec), "--sampling-rate", "250",
                 "--order", "2", "--out", str(model_path)]) == 0
    model = read_model_json(model_path)
    assert model.order_p == 2
    assert model.channel_labels == ("ch1", "ch2")

    auto_path = tmp_path / "auto.json"
    assert main(["fit", "--input", str(rec), "--sampling-rate", "250",
                 "--auto-order", "--p-scan-max", "6", "--out", str(auto_path)]) == 0
    auto = read_model_json(auto_path)
    assert 1 <= auto.order_p <= 6
    out = capsys.readouterr().out
    assert "order" in out


def test_pdc_from_model_and_from_recording(tmp_path, capsys):
    rec = _simulate(tmp_path, n=1500)
    model_path = tmp_path / "model.json"
    main(["fit", "--input", str(rec), "--sampling-rate", "250",
          "--order", "1", "--out", str(model_path)])

    spec_path = tmp_path / "spec.csv"
    assert main(["pdc", "--model", str(model_path), "--sampling-rate", "250",
                 "--out", str(spec_path)]) == 0
    spectrum = read_spectrum_csv(spec_path, sampling_rate_hz=250.0)
    assert spectrum.grid.n_freqs == 53
    assert spectrum.values.shape == (53, 2, 2)

    direct = tmp_path / "direct.csv"
    assert main(["pdc", "--input", str(rec), "--sampling-rate", "250",
                 "--order", "1", "--low", "4", "--high", "20", "--step", "1",
                 "--out", str(direct)]) == 0
    narrow = read_spectrum_csv(direct, sampling_rate_hz=250.0)
    assert narrow.grid.n_freqs == 17
    capsys.readouterr()


def test_bands_default_and_custom(tmp_path, capsys):
    rec = _simulate(tmp_path, n=1500)
    spec_path = tmp_path / "spec.csv"
    main(["pdc", "--input", str(rec), "--sampling-rate", "250",
          "--order", "1", "--out", str(spec_path)])

    bands_path = tmp_path / "bands.json"
    assert main(["bands", "--spectrum", str(spec_path),
                 "--out", str(bands_path)]) == 0
    payload = json.loads(bands_path.read_text())
    assert set(payload["bands"]) == {"theta", "alpha", "beta1", "beta2"}

    custom = tmp_path / "custom.json"
    assert main(["bands", "--spectrum", str(spec_path), "--out", str(custom),
                 "--band", "mid:10:20", "--band", "low:4:8"]) == 0
    payload = json.loads(custom.read_text())
    assert set(payload["bands"]) == {"mid", "low"}
    capsys.readouterr()


def _band_table_csv(path, shift, subjects, scramble=False):
    rows = [("pair", "band", "subject", "value")]
    rng = np.random.default_rng(6)
    listed = list(subjects)
    if scramble:
        listed = listed[::-1]
    for subject in listed:
        base = 0.3 + 0.01 * rng.standard_normal()
        rows.append(("f->t", "theta", subject, f"{base + shift:.6f}"))
        rows.append(("f->t", "alpha", subject, f"{base:.6f}"))
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def test_compare_pairs_subjects_by_id(tmp_path, capsys):
    subjects = [f"s{i}" for i in range(10)]
    a_path = tmp_path / "a.csv"
    _band_table_csv(a_path, 0.0, subjects)
    b_path = tmp_path / "b.csv"
    _band_table_csv(b_path, 0.2, subjects, scramble=True)
    out = tmp_path / "table.csv"
    assert main(["compare", "--condition-a", str(a_path),
                 "--condition-b", str(b_path), "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = {r["band"]: r for r in csv.DictReader(fh)}
    assert rows["theta"]["significant"] == "true"
    assert rows["theta"]["direction"] == "b_greater"
    capsys.readouterr()


def test_compare_rejects_mismatched_subjects(tmp_path, capsys):
    a_path, b_path = tmp_path / "a.csv", tmp_path / "b.csv"
    _band_table_csv(a_path, 0.0, ["s1", "s2", "s3"])
    _band_table_csv(b_path, 0.1, ["s1", "s2", "s9"])
    code = main(["compare", "--condition-a", str(a_path),
                 "--condition-b", str(b_path), "--out", str(tmp_path / "t.csv")])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("pdckit: argument-error:")
    assert err.count("\n") == 1


def test_pipeline_command_end_to_end(tmp_path, capsys):
    from pdckit import generate, write_recording_csv

    config_path = tmp_path / "config.json"
    write_config_json(default_config(250.0), config_path)
    markers = tmp_path / "markers.csv"
    markers.write_text("".join(f"{900 * k}\n" for k in range(6)))

    coupled = np.array([[[0.3, 0.0], [0.4, 0.3]]])
    quiet = np.array([[[0.3, 0.0], [0.0, 0.3]]])
    paths = {"a": [], "b": []}
    for cond, coeffs, base in (("a", quiet, 0), ("b", coupled, 100)):
        for s in range(10):
            rec = generate(GeneratorSpec(
                coeff_matrices=coeffs,
                innovation_covariance=np.eye(2),
                n_samples=225 * 6,
                seed=55_000 + base + s,
                sampling_rate_hz=250.0,
            ))
            p = tmp_path / f"{cond}{s}.csv"
            write_recording_csv(rec, p)
            paths[cond].append(str(p))

    out_dir = tmp_path / "out"
    code = main(["pipeline", "--config", str(config_path),
                 "--condition-a", *paths["a"], "--condition-b", *paths["b"],
                 "--markers", str(markers), "--out", str(out_dir)])
    assert code == 0
    report = json.loads((out_dir / "report.json").read_text())
    assert len(report["tests"]) == 8
    assert (out_dir / "test_table.csv").exists()
    out = capsys.readouterr().out
    assert "hypotheses 8" in out


def test_pipeline_thread_env_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PDC_TOOLKIT_THREADS", "2")
    test_pipeline_command_end_to_end(tmp_path, capsys)


# -------------------------------------------------------------------- errors


def test_missing_input_file_is_io_error(tmp_path, capsys):
    code = main(["fit", "--input", str(tmp_path / "absent.csv"),
                 "--sampling-rate", "250", "--order", "2",
                 "--out", str(tmp_path / "m.json")])
    assert code == 3
    err = capsys.readouterr().err
    assert err.startswith("pdckit: io-error:")
    assert "absent.csv" in err


def test_malformed_json_is_argument_error(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code = main(["simulate", "--spec", str(bad), "--out", str(tmp_path / "r.csv")])
    assert code == 2
    assert capsys.readouterr().err.startswith("pdckit: argument-error:")


def test_unfittable_order_is_argument_error(tmp_path, capsys):
    rec = _simulate(tmp_path, n=800)
    code = main(["fit", "--input", str(rec), "--sampling-rate", "250",
                 "--order", "400", "--out", str(tmp_path / "m.json")])
    assert code == 2
    capsys.readouterr()


def test_constant_recording_is_estimation_error(tmp_path, capsys):
    path = tmp_path / "flat.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ch1", "ch2"])
        writer.writerows([[1.0, 2.0]] * 500)
    code = main(["fit", "--input", str(path), "--sampling-rate", "250",
                 "--order", "2", "--out", str(tmp_path / "m.json")])
    assert code == 4
    assert capsys.readouterr().err.startswith("pdckit: estimation-error:")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("pdckit ")


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "pdckit", "--version"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("pdckit ")
