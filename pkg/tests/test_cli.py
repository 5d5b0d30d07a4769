import json

import pytest

from poisoncert.cli import main


@pytest.fixture(scope="module")
def blob_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("blobs")
    code = main(["generate", "--n", "400", "--d", "4", "--k", "2", "--separation", "4", "--seed", "3",
                 "--test-fraction", "0.25", "--output", str(root / "train.csv"),
                 "--test-output", str(root / "test.csv")])
    assert code == 0
    return root


def train_args(root, votes, *extra):
    return ["train", "--train", str(root / "train.csv"), "--test", str(root / "test.csv"),
            "--scheme", "with", "--n-s", "20", "--T", "20", "--expand-size", "256",
            "--seed", "5", "--votes", str(votes), *extra]


class TestGenerate:
    def test_reproducible(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            assert main(["generate", "--n", "2000", "--k", "2", "--seed", "4",
                         "--output", str(tmp_path / name)]) == 0
        a = (tmp_path / "a.csv").read_text()
        assert a == (tmp_path / "b.csv").read_text()
        assert len(a.splitlines()) == 2001

    def test_zero_classes(self, tmp_path):
        assert main(["generate", "--k", "0", "--output", str(tmp_path / "a.csv")]) == 1

    def test_zero_separation(self, tmp_path):
        assert main(["generate", "--separation", "0", "--n", "10", "--output", str(tmp_path / "a.csv")]) == 0


class TestTrain:
    def test_byte_identical(self, blob_files, tmp_path):
        assert main(train_args(blob_files, tmp_path / "v1.json")) == 0
        assert main(train_args(blob_files, tmp_path / "v2.json", "--workers", "3")) == 0
        assert (tmp_path / "v1.json").read_bytes() == (tmp_path / "v2.json").read_bytes()
        header = json.loads((tmp_path / "v1.json").read_text())["header"]
        assert header["T"] == 20 and header["n"] == 300

    def test_case3_overlap(self, blob_files, tmp_path):
        code = main(train_args(blob_files, tmp_path / "v.json", "--case", "3", "--clean-classes", "0,1"))
        assert code == 1
        assert not (tmp_path / "v.json").exists()

    def test_missing_data(self, tmp_path):
        assert main(["train", "--train", str(tmp_path / "no.csv"), "--test", str(tmp_path / "no.csv"),
                     "--votes", str(tmp_path / "v.json")]) == 1

    def test_config_file(self, blob_files, tmp_path, monkeypatch):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"train = {blob_files / 'train.csv'}\ntest = {blob_files / 'test.csv'}\n"
                       "T = 5\nexpand_size = 128\nlearner = centroid\n")
        monkeypatch.setenv("POISONCERT_CONFIG", str(cfg))
        assert main(["train", "--votes", str(tmp_path / "v.json")]) == 0
        assert json.loads((tmp_path / "v.json").read_text())["header"]["T"] == 5


@pytest.fixture(scope="module")
def votes(blob_files, tmp_path_factory):
    path = tmp_path_factory.mktemp("v") / "votes.json"
    assert main(train_args(blob_files, path)) == 0
    return path


class TestCertifyAndCurve:
    def test_certify(self, votes, tmp_path):
        out = tmp_path / "certs.csv"
        assert main(["certify", "--votes", str(votes), "--alpha", "0.01", "--output", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert rows[0].startswith("example_id,label,radius")
        assert len(rows) == 101

    def test_abstain_marker(self, tmp_path):
        from poisoncert.certify import VoteRecord
        from poisoncert.formats import VotesFile, write_votes
        write_votes(tmp_path / "v.json", VotesFile(
            T=10, classes=[0, 1], scheme={"kind": "with", "n_s": 5}, n=100, n_c=0, master_seed=0,
            records=[VoteRecord("tie", {0: 5, 1: 5}, 10, 0)]))
        out = tmp_path / "c.csv"
        assert main(["certify", "--votes", str(tmp_path / "v.json"), "--output", str(out)]) == 0
        assert out.read_text().splitlines()[1].startswith("tie,ABSTAIN,ABSTAIN,")

    def test_missing_votes(self, tmp_path):
        assert main(["certify", "--votes", str(tmp_path / "none.json")]) == 1

    def test_curve(self, votes, tmp_path):
        out = tmp_path / "curve.csv"
        assert main(["curve", "--votes", str(votes), "--rho-grid", "0:30:3", "--output", str(out)]) == 0
        vals = [float(line.split(",")[1]) for line in out.read_text().splitlines()[1:]]
        assert len(vals) == 11 and vals[0] > 0.9
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_curve_negative_grid(self, votes):
        assert main(["curve", "--votes", str(votes), "--rho-grid=-3,0"]) == 1


class TestRadius:
    @pytest.mark.parametrize("margin,expected", [("0", "0"), ("-1", "ABSTAIN"), ("0.5", "5")])
    def test_values(self, capsys, margin, expected):
        code = main(["radius", "--n", "1000", "--scheme", "with", "--n-s", "50", "--model", "P3",
                     f"--margin={margin}"])
        assert code == 0
        assert capsys.readouterr().out.strip() == expected

    def test_bad_model(self):
        assert main(["radius", "--model", "P9", "--margin", "0.1"]) == 1


class TestOracleCheck:
    def test_small_grid_passes(self, tmp_path):
        out = tmp_path / "report.json"
        assert main(["oracle-check", "--max-n", "4", "--max-rho", "1", "--output", str(out)]) == 0
        report = json.loads(out.read_text())
        assert report["status"] == "PASS" and report["failures"] == 0 and report["instances"] > 0

    def test_perturbed_pi_fails(self, capsys):
        assert main(["oracle-check", "--max-n", "4", "--max-rho", "1", "--perturb-pi"]) == 2
        assert "FAIL pi" in capsys.readouterr().out

    @pytest.mark.parametrize("caps", [["--max-n", "9"], ["--max-rho", "4"], ["--max-n", "2"]])
    def test_caps_refused(self, caps):
        assert main(["oracle-check", *caps]) == 1

    @pytest.mark.slow
    def test_default_caps(self, capsys):
        assert main(["oracle-check"]) == 0
        assert "PASS" in capsys.readouterr().out
