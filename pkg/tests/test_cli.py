"""CLI round trips, config echo, determinism."""

import numpy as np
import pytest

from cplearn.cli import main
from cplearn.decomposition import load_report
from cplearn.models import load_samples


def run(argv):
    return main(argv)


def test_gen_decompose_round_trip(tmp_path):
    s = tmp_path / "s.txt"
    r = tmp_path / "r.txt"
    assert run(["gen", "--model", "multiview", "--d", "12", "--k", "3", "--n", "60",
                "--zeta", "0.01", "--seed", "5", "--out", str(s)]) == 0
    ss = load_samples(s)
    assert ss.d == 12 and ss.n == 60 and ss.n_views == 3
    assert run(["decompose", "--samples", str(s), "--k", "3", "--n-init", "60",
                "--seed", "1", "--out", str(r)]) == 0
    text = r.read_text()
    assert text.startswith("# cplearn")
    assert "# seed=1" in text and "# n_init=60" in text
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    with open(tmp_path / "body.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")
    model, meta = load_report(tmp_path / "body.txt")
    assert model is not None and model.k == 3


def test_gen_ica_and_gmm(tmp_path):
    s = tmp_path / "i.txt"
    assert run(["gen", "--model", "ica", "--d", "6", "--k", "6", "--n", "40",
                "--seed", "2", "--out", str(s)]) == 0
    assert load_samples(s).n_views == 1
    assert run(["gen", "--model", "gmm", "--d", "6", "--k", "2", "--n", "40",
                "--zeta", "0.1", "--seed", "2", "--out", str(s)]) == 0
    ss = load_samples(s)
    assert ss.n_views == 1 and ss.labels is not None


def test_decompose_gmm3_requires_variance(tmp_path):
    s = tmp_path / "g.txt"
    run(["gen", "--model", "gmm", "--d", "5", "--k", "2", "--n", "20",
         "--zeta", "0.1", "--seed", "3", "--out", str(s)])
    with pytest.raises(SystemExit):
        run(["decompose", "--samples", str(s), "--moment", "gmm3", "--k", "2",
             "--out", str(tmp_path / "r.txt")])
    assert run(["decompose", "--samples", str(s), "--moment", "gmm3", "--variance", "0.01",
                "--k", "2", "--n-init", "30", "--out", str(tmp_path / "r.txt")]) == 0


def test_experiment_table1_smoke(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["experiment", "table1", "--k-grid", "10", "--runs", "1",
                "--init-per-component", "30", "--seed", "0", "--out", str(out)]) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0].startswith("k,avg_square_error")
    assert len(lines) == 2 and lines[1].startswith("10,")


def test_experiment_fig3_smoke_and_monotone(tmp_path):
    out = tmp_path / "f.csv"
    assert run(["experiment", "fig3", "--k-grid", "5", "--d", "25", "--n", "200",
                "--runs", "2", "--L-grid", "5,20,80", "--seed", "1", "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()
            if not l.startswith("#") and not l.startswith("k,")]
    med = [float(r[3]) for r in rows]
    assert all(b >= a for a, b in zip(med, med[1:]))


def test_experiment_fig3_rank1_saturates(tmp_path):
    out = tmp_path / "f1.csv"
    assert run(["experiment", "fig3", "--k-grid", "1", "--d", "10", "--n", "50",
                "--runs", "2", "--L-grid", "1,2", "--seed", "2", "--out", str(out)]) == 0
    rows = [l.split(",") for l in out.read_text().splitlines()
            if not l.startswith("#") and not l.startswith("k,")]
    assert float(rows[0][2]) == 1.0  # rate 1.0 already at L=1


def test_concentration_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["concentration", "--model", "ica", "--d", "5", "--k", "5",
            "--n-grid", "100,200,400", "--seeds", "2", "--seed", "9"]
    assert run(args + ["--out", str(a), "--slopes-out", str(tmp_path / "sa.csv")]) == 0
    assert run(args + ["--out", str(b)]) == 0
    strip = lambda p: [l for l in p.read_text().splitlines() if not l.startswith("# out")]
    assert strip(a) == strip(b)
    slopes = (tmp_path / "sa.csv").read_text().splitlines()
    assert slopes[-1].startswith("ica,5,5,")


def test_concentration_empty_grid_rejected(tmp_path):
    with pytest.raises(SystemExit):
        run(["concentration", "--n-grid", "", "--out", str(tmp_path / "c.csv")])


def test_config_file_defaults_and_override(tmp_path):
    s = tmp_path / "s.txt"
    run(["gen", "--model", "multiview", "--d", "8", "--k", "2", "--n", "20",
         "--seed", "0", "--out", str(s)])
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("n-init 33\nseed 4\n# comment line\nmax-iter = 55\n")
    r = tmp_path / "r.txt"
    assert run(["decompose", "--samples", str(s), "--k", "2", "--config", str(cfg),
                "--seed", "7", "--out", str(r)]) == 0
    text = r.read_text()
    assert "# n_init=33" in text        # from config
    assert "# max_iter=55" in text      # from config, '=' form
    assert "# seed=7" in text           # explicit flag wins
    bad = tmp_path / "bad.txt"
    bad.write_text("no-such-key 1\n")
    with pytest.raises(SystemExit):
        run(["decompose", "--samples", str(s), "--k", "2", "--config", str(bad),
             "--out", str(r)])


def test_gen_truth_tensor_output(tmp_path):
    from cplearn.tensor import load_tensor

    s, t = tmp_path / "s.txt", tmp_path / "t.txt"
    run(["gen", "--model", "multiview", "--d", "5", "--k", "2", "--n", "10",
         "--seed", "1", "--out", str(s), "--truth-out", str(t)])
    T = load_tensor(t)
    assert T.order == 3 and T.d == 5
