import json

import pandas as pd

from autologistic.cli import main
from autologistic.dataio import load_dataset


def write_config(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


SIM_CONFIG = {
    "shape": {"rows": 5, "cols": 5},
    "neighborhood": {"rect": [1, 1]},
    "params": {"beta": [-1.0], "rho1": 0.4, "rho2": 0.5},
    "horizon": 4,
    "covariates": {"kind": "none"},
    "sampler": {"mode": "cftp", "initial_p0": 0.2},
}


def simulate(tmp_path, seed=3):
    cfg = write_config(tmp_path, "sim.json", SIM_CONFIG)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--seed", str(seed), "--out", str(out)]) == 0
    return out


class TestSimulate:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        out = simulate(tmp_path)
        record = json.loads((out / "run.json").read_text())
        assert record["seed"] == 3
        ds = load_dataset(out / "field.csv")
        assert ds.Z.shape == (25, 5)
        echoed = capsys.readouterr().out
        assert '"command": "simulate"' in echoed

        out2 = tmp_path / "again"
        cfg = write_config(tmp_path, "sim.json", SIM_CONFIG)
        main(["simulate", "--config", cfg, "--seed", "3", "--out", str(out2)])
        assert (out / "field.csv").read_text() == (out2 / "field.csv").read_text()

    def test_preset_shortcut(self, tmp_path):
        out = tmp_path / "preset"
        assert main(["simulate", "--preset", "model1", "--seed", "1",
                     "--out", str(out)]) == 0
        ds = load_dataset(out / "field.csv", out / "covariates.csv")
        assert ds.Z.shape == (400, 16)
        assert ds.X.names == ["tent"]

    def test_config_error_exit_code(self, tmp_path):
        cfg = write_config(tmp_path, "bad.json", {"shape": {"rows": 5}})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x")]) == 2

    def test_unparseable_config(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "x")]) == 2


class TestFit:
    def test_fit_and_reproducibility(self, tmp_path, capsys):
        out = simulate(tmp_path)
        fit_cfg = write_config(tmp_path, "fit.json", {"neighborhood": {"rect": [1, 1]}})
        fit_out = tmp_path / "fit"
        code = main(["fit", "--field", str(out / "field.csv"), "--config", fit_cfg,
                     "--seed", "0", "--out", str(fit_out)])
        assert code == 0
        table = capsys.readouterr().out
        assert "intercept" in table and "spatial" in table and "log-PL" in table
        blob = json.loads((fit_out / "fit.json").read_text())
        assert blob["converged"] is True

        fit_out2 = tmp_path / "fit2"
        main(["fit", "--field", str(out / "field.csv"), "--config", fit_cfg,
              "--seed", "0", "--out", str(fit_out2)])
        assert (fit_out / "fit.json").read_text() == (fit_out2 / "fit.json").read_text()

    def test_fit_with_bootstrap(self, tmp_path):
        out = simulate(tmp_path)
        fit_cfg = write_config(tmp_path, "fit.json", {
            "neighborhood": {"rect": [1, 1]}, "bootstrap": 3,
        })
        fit_out = tmp_path / "fitboot"
        assert main(["fit", "--field", str(out / "field.csv"), "--config", fit_cfg,
                     "--seed", "4", "--out", str(fit_out)]) == 0
        blob = json.loads((fit_out / "fit.json").read_text())
        assert blob["sd_bootstrap"] is not None and len(blob["sd_bootstrap"]) == 3

    def test_data_error_exit_code(self, tmp_path):
        out = simulate(tmp_path)
        frame = pd.read_csv(out / "field.csv")
        frame.loc[0, "z"] = 7
        bad = tmp_path / "bad.csv"
        frame.to_csv(bad, index=False)
        fit_cfg = write_config(tmp_path, "fit.json", {"neighborhood": {"rect": [1, 1]}})
        assert main(["fit", "--field", str(bad), "--config", fit_cfg,
                     "--out", str(tmp_path / "y")]) == 3

    def test_numerical_error_exit_code(self, tmp_path):
        out = simulate(tmp_path)
        fit_cfg = write_config(tmp_path, "fit.json", {"neighborhood": {"rect": [0, 0]}})
        assert main(["fit", "--field", str(out / "field.csv"), "--config", fit_cfg,
                     "--out", str(tmp_path / "z")]) == 4


class TestSelect:
    def test_select_outputs(self, tmp_path, capsys):
        out = simulate(tmp_path)
        sel_cfg = write_config(tmp_path, "sel.json", {
            "candidates": {"rect": {"v_r": [1, 2], "v_c": [1]}},
        })
        sel_out = tmp_path / "sel"
        assert main(["select", "--field", str(out / "field.csv"), "--config", sel_cfg,
                     "--out", str(sel_out)]) == 0
        stdout = capsys.readouterr().out
        assert "winner:" in stdout
        frame = pd.read_csv(sel_out / "selection.csv")
        assert set(frame.label) == {"rect(1,1)", "rect(2,1)"}
        blob = json.loads((sel_out / "selection.json").read_text())
        assert blob["winner"] in {"rect(1,1)", "rect(2,1)"}

    def test_candidates_required(self, tmp_path):
        out = simulate(tmp_path)
        sel_cfg = write_config(tmp_path, "sel.json", {"candidates": {}})
        assert main(["select", "--field", str(out / "field.csv"), "--config", sel_cfg,
                     "--out", str(tmp_path / "s")]) == 2


class TestStudy:
    def test_study_preset_emits_series(self, tmp_path):
        study_cfg = write_config(tmp_path, "study.json", {
            "n_replicates": 1, "horizon": 3, "grid": "full",
        })
        out = tmp_path / "study"
        assert main(["study", "--preset", "model1", "--config", study_cfg,
                     "--seed", "2", "--out", str(out)]) == 0
        series = pd.read_csv(out / "study_series.csv")
        # 3 variants x 9 grid cells x 1 replicate x 4 time points
        assert len(series) == 3 * 9 * 1 * 4
        summary = pd.read_csv(out / "study_summary.csv")
        assert {"band_lo", "band_hi"} <= set(summary.columns)

    def test_unknown_preset(self, tmp_path):
        assert main(["study", "--preset", "nope", "--out", str(tmp_path / "s")]) == 2


class TestSurrogate:
    def test_surrogate_files(self, tmp_path):
        cfg = write_config(tmp_path, "sur.json", {"rows": 8, "cols": 10, "years": 3})
        out = tmp_path / "sur"
        assert main(["surrogate", "--config", cfg, "--seed", "6", "--out", str(out)]) == 0
        ds = load_dataset(out / "field.csv", row_spacing=1.5)
        assert ds.Z.shape == (80, 3)
        meta = json.loads((out / "meta.json").read_text())
        assert meta["truth"]["rho1"] == 0.135
