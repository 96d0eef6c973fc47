import json

import numpy as np
import pytest

from affiltest.cli import main


@pytest.fixture
def bid_file(tmp_path):
    rng = np.random.Generator(np.random.Philox(key=77))
    n_auctions, n_bidders = 60, 3
    estimates = np.exp(rng.uniform(np.log(100), np.log(5000), n_auctions))
    lines = ["auction_id,engineer_estimate,bid"]
    for t in range(n_auctions):
        shared = rng.normal(0, 0.08)
        for _ in range(n_bidders):
            log_bid = 0.1 + 0.97 * np.log(estimates[t]) + shared + rng.normal(0, 0.06)
            lines.append(f"A{t:04d},{estimates[t]:.2f},{np.exp(log_bid):.4f}")
    path = tmp_path / "bids.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_summary(bid_file, capsys):
    assert main(["summary", str(bid_file), "--n-bidders", "3", "--quiet"]) == 0
    out = capsys.readouterr().out
    assert "auctions kept:    60" in out


def test_fit_hetero_outputs(bid_file, tmp_path):
    outdir = tmp_path / "out"
    rc = main(["fit-hetero", str(bid_file), "--n-bidders", "3",
               "--method", "lad", "--outdir", str(outdir), "--quiet"])
    assert rc == 0
    for name in ("scatter.csv", "curves.csv", "residuals.csv"):
        assert (outdir / name).exists()
    header = (outdir / "curves.csv").read_text().splitlines()[0]
    assert header == "log_estimate,ls,lad,kernel"
    assert len((outdir / "residuals.csv").read_text().splitlines()) == 61


def test_test_affiliation_end_to_end(bid_file, tmp_path):
    outdir = tmp_path / "out"
    rc = main(["test-affiliation", str(bid_file), "--n-bidders", "3", "--k", "2",
               "--weight-draws", "10000", "--seed", "1",
               "--outdir", str(outdir), "--quiet"])
    assert rc == 0
    report = json.loads((outdir / "report.json").read_text())
    assert report["t_auctions"] == 60
    assert report["n_bidders"] == 3
    assert report["decision"] in ("reject", "fail_to_reject", "inconclusive")
    assert 0.0 <= report["pvalue"] <= 1.0
    assert (outdir / "summary.txt").read_text().strip()


def test_test_affiliation_breakpoints_flag(bid_file, tmp_path):
    outdir = tmp_path / "out"
    rc = main(["test-affiliation", str(bid_file), "--n-bidders", "3",
               "--breakpoints", "0,0.4,0.6,1", "--weight-draws", "5000",
               "--outdir", str(outdir), "--quiet"])
    assert rc == 0
    report = json.loads((outdir / "report.json").read_text())
    assert report["breakpoints"] == [0.0, 0.4, 0.6, 1.0]
    assert "non_equispaced_grid" in report["flags"]


def test_simulate_outputs(tmp_path):
    outdir = tmp_path / "mc"
    rc = main(["simulate", "--dgp", "violating-2x2", "--dgp-param", "0.3",
               "--t", "300", "--replications", "4", "--seed", "3",
               "--outdir", str(outdir), "--quiet"])
    assert rc == 0
    payload = json.loads((outdir / "mc.json").read_text())
    assert payload["replications"] == 4
    assert (outdir / "mc.csv").exists()


def test_weights_subcommand(tmp_path, capsys):
    pi0 = tmp_path / "pi0.csv"
    np.savetxt(pi0, np.array([[1.0, 0.3], [0.3, 1.0]]), delimiter=",")
    out = tmp_path / "weights.json"
    rc = main(["weights", str(pi0), "--draws", "20000", "--seed", "5",
               "--output", str(out), "--quiet"])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["j"] == 2
    assert sum(payload["weights"]) == pytest.approx(1.0, abs=1e-12)


def test_constraints_subcommand(capsys):
    rc = main(["constraints", "--k", "3", "--n-bidders", "2", "--quiet"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "3 constraints" in out


def test_config_defaults_and_override(bid_file, tmp_path):
    config = tmp_path / "config.yaml"
    config.write_text("seed: 11\nweight-draws: 5000\nk: 2\n")
    out1 = tmp_path / "a"
    rc = main(["test-affiliation", str(bid_file), "--config", str(config),
               "--n-bidders", "3", "--outdir", str(out1), "--quiet"])
    assert rc == 0
    report = json.loads((out1 / "report.json").read_text())
    assert report["seed"] == 11
    assert report["options"]["weight_draws"] == 5000
    out2 = tmp_path / "b"
    rc = main(["test-affiliation", str(bid_file), "--config", str(config),
               "--n-bidders", "3", "--seed", "99", "--outdir", str(out2), "--quiet"])
    assert rc == 0
    assert json.loads((out2 / "report.json").read_text())["seed"] == 99


def test_exit_codes(tmp_path, bid_file):
    # missing file
    assert main(["summary", str(tmp_path / "nope.csv"), "--quiet"]) == 2
    # malformed data
    bad = tmp_path / "bad.csv"
    bad.write_text("auction_id,engineer_estimate,bid\nA,xyz,1\n")
    assert main(["summary", str(bad), "--quiet"]) == 2
    # unknown config key
    config = tmp_path / "bad.yaml"
    config.write_text("not_an_option: 3\n")
    assert main(["test-affiliation", str(bid_file), "--config", str(config),
                 "--quiet"]) == 2
    # config must be a mapping
    config2 = tmp_path / "list.yaml"
    config2.write_text("- 1\n- 2\n")
    assert main(["summary", str(bid_file), "--config", str(config2),
                 "--quiet"]) == 2
    # bad dgp name
    assert main(["simulate", "--dgp", "no-such-dgp", "--quiet"]) == 2
