import csv

import numpy as np
import pytest

from l0trunc.cli import main
from l0trunc.datasets import save_synthetic
from l0trunc.gmm import GaussianMixture, sample


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


class TestTheory:
    def test_writes_curves_and_passes(self, tmp_path):
        code = main([
            "theory", "--nu", "1,0,0,0", "--d", "1e12",
            "--eps-start", "0.2", "--eps-stop", "0.4", "--eps-num", "5",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        rows = read_csv(tmp_path / "bounds.csv")
        assert len(rows) == 5
        assert set(rows[0]) >= {"eps", "c", "lambda_c", "k_trunc_lb", "k_star_ub",
                                "alpha_trunc_lb", "alpha_star_ub", "c1", "c2"}
        ks = [float(r["k_star_ub"]) for r in rows]
        assert all(b >= a for a, b in zip(ks, ks[1:]))
        assert (tmp_path / "config_resolved.ini").exists()

    def test_empty_grid_is_usage_error(self, tmp_path):
        code = main(["theory", "--nu", "1,0", "--eps-num", "0", "--out-dir", str(tmp_path)])
        assert code == 2

    def test_vacuous_rows_flagged_not_failed(self, tmp_path):
        code = main([
            "theory", "--nu", "1,0,0,0", "--d", "1000",
            "--eps-start", "0.2", "--eps-stop", "0.45", "--eps-num", "4",
            "--out-dir", str(tmp_path),
        ])
        assert code == 0
        rows = read_csv(tmp_path / "bounds.csv")
        assert any(r["in_window"] == "0" for r in rows)
        assert all(r["sandwich_ok"] == "1" for r in rows)


class TestGmmVerify:
    def test_report_passes(self, tmp_path):
        code = main(["gmm-verify", "--d", "40", "--trials", "4000", "--seed", "5", "--out-dir", str(tmp_path)])
        assert code == 0
        report = (tmp_path / "report.txt").read_text()
        assert "PASS budget-soundness" in report
        assert "FAIL" not in report

    def test_deterministic_report(self, tmp_path):
        main(["gmm-verify", "--d", "30", "--trials", "3000", "--seed", "7", "--out-dir", str(tmp_path / "a")])
        main(["gmm-verify", "--d", "30", "--trials", "3000", "--seed", "7", "--out-dir", str(tmp_path / "b")])
        assert (tmp_path / "a" / "report.txt").read_text() == (tmp_path / "b" / "report.txt").read_text()


class TestTrainAttackRho:
    @pytest.fixture(scope="class")
    def synth(self, tmp_path_factory):
        path = tmp_path_factory.mktemp("data") / "synth.bin"
        rng = np.random.default_rng(0)
        model = GaussianMixture(rng.uniform(0.1, 0.5, size=16), np.full(16, 0.2))
        X, y = sample(model, 400, seed=1)
        X = np.clip(X, -1.5, 1.5)
        save_synthetic(path, X, y, model.mu, model.sigma, seed=1)
        return path

    def test_train_attack_rho_pipeline(self, tmp_path, synth):
        out_train = tmp_path / "train"
        code = main([
            "train", "--data", f"synth:{synth}", "--arch", "16,8,2", "--k", "1",
            "--epochs", "3", "--batch", "32", "--lr", "0.1", "--out-dir", str(out_train),
        ])
        assert code == 0
        model_path = out_train / "model.bin"
        assert model_path.exists()
        hist = read_csv(out_train / "history.csv")
        assert len(hist) == 3

        out_attack = tmp_path / "attack"
        code = main([
            "attack", "--model", str(model_path), "--data", f"synth:{synth}",
            "--k-adv", "1,2", "--queries", "10", "--n", "30", "--out-dir", str(out_attack),
        ])
        assert code == 0
        rows = read_csv(out_attack / "robust_acc.csv")
        assert len(rows) == 2

        out_rho = tmp_path / "rho"
        code = main([
            "rho", "--model", str(model_path), "--data", f"synth:{synth}",
            "--restarts", "2", "--beta", "100", "--n", "10", "--out-dir", str(out_rho),
        ])
        assert code == 0
        rows = read_csv(out_rho / "rho.csv")
        assert len(rows) == 1

    def test_adv_train_runs(self, tmp_path, synth):
        out = tmp_path / "advtrain"
        code = main([
            "adv-train", "--data", f"synth:{synth}", "--arch", "16,8,2", "--k", "1",
            "--epochs", "2", "--batch", "32", "--lr", "0.1", "--k-adv", "2",
            "--queries", "10", "--regen", "2", "--out-dir", str(out),
        ])
        assert code == 0
        assert (out / "model.bin").exists()

    def test_missing_model_is_io_error(self, tmp_path, synth):
        code = main([
            "attack", "--model", str(tmp_path / "nope.bin"), "--data", f"synth:{synth}",
            "--out-dir", str(tmp_path),
        ])
        assert code == 3

    def test_queries_zero_rejected(self, tmp_path, synth):
        out_train = tmp_path / "m"
        main([
            "train", "--data", f"synth:{synth}", "--arch", "16,8,2",
            "--epochs", "1", "--batch", "32", "--lr", "0.1", "--out-dir", str(out_train),
        ])
        code = main([
            "attack", "--model", str(out_train / "model.bin"), "--data", f"synth:{synth}",
            "--queries", "0", "--out-dir", str(tmp_path),
        ])
        assert code == 2


class TestGradCheck:
    def test_passes(self, tmp_path, capsys):
        assert main(["grad-check", "--seed", "3"]) == 0
        assert "max relative gradient error" in capsys.readouterr().out


class TestConfigFile:
    def test_config_supplies_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[theory]\nnu = 1,0,0\nd = 1e12\neps-num = 4\n")
        out = tmp_path / "out"
        code = main([
            "theory", "--config", str(cfg), "--eps-num", "6", "--out-dir", str(out),
        ])
        assert code == 0
        rows = read_csv(out / "bounds.csv")
        assert len(rows) == 6  # flag beat the config value

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[theory]\nbogus = 1\n")
        code = main(["theory", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert code == 2
