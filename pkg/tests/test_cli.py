import json

import numpy as np
import pytest

from dpturnstile import experiment as ex
from dpturnstile.cli import main
from dpturnstile.metrics import read_trace
from dpturnstile.stream import read_stream


def _json(capsys):
    return json.loads(capsys.readouterr().out)


def test_generate_and_noise_off_run_reports_exact_values(tmp_path, capsys):
    s = tmp_path / "s.txt"
    assert main(["generate", "--kind", "uniform", "--n", "50", "--T", "200", "--seed", "3", "--out", str(s)]) == 0
    meta, _ = read_stream(s)
    assert (meta.n, meta.T) == (50, 200)
    for est in ("counter", "f2"):
        out = tmp_path / f"{est}.csv"
        capsys.readouterr()
        assert main(["run", "--estimator", est, "--stream", str(s), "--rho", "1", "--noise-off", "--out",
                     str(out), "--json"]) == 0
        assert _json(capsys)["rho"] is None
        tr = read_trace(out)
        np.testing.assert_allclose(tr.estimate, tr.exact, rtol=0.5 if est == "f2" else 0)


def test_f2_lowerbound_pair_is_written(tmp_path):
    out = tmp_path / "lb.txt"
    assert main(["generate", "--kind", "f2-lowerbound", "--T", "10", "--out", str(out)]) == 0
    _, base = read_stream(out)
    _, other = read_stream(tmp_path / "lb.neighbor.txt")
    assert sum(a != b for a, b in zip(base, other)) == 1


def test_usage_errors_exit_2(tmp_path):
    s = tmp_path / "s.txt"
    main(["generate", "--kind", "uniform", "--n", "8", "--T", "8", "--out", str(s)])
    out = str(tmp_path / "o.csv")
    assert main(["run", "--estimator", "counter", "--stream", str(s), "--rho", "1", "--epsilon", "1",
                 "--out", out]) == 2
    assert main(["run", "--estimator", "counter", "--stream", str(s), "--out", out]) == 2  # no budget
    assert main(["generate", "--kind", "zipf", "--T", "8", "--out", out]) == 2
    assert main(["run", "--stream", str(s), "--rho", "1", "--out", out]) == 2
    assert main(["evaluate", str(s)]) == 2


def test_minhash_on_general_stream_exits_3(tmp_path, capsys):
    s = tmp_path / "g.txt"
    main(["generate", "--kind", "uniform", "--model", "general", "--n", "8", "--T", "16", "--out", str(s)])
    assert main(["run", "--estimator", "minhash", "--stream", str(s), "--rho", "1",
                 "--out", str(tmp_path / "o.csv")]) == 3
    assert "strict turnstile" in capsys.readouterr().err


def test_f2_on_general_stream_is_tagged(tmp_path, capsys):
    s = tmp_path / "g.txt"
    main(["generate", "--kind", "uniform", "--model", "general", "--n", "8", "--T", "16", "--out", str(s)])
    capsys.readouterr()
    assert main(["run", "--estimator", "f2", "--stream", str(s), "--rho", "1", "--alpha", "0.5",
                 "--out", str(tmp_path / "o.csv"), "--json"]) == 0
    captured = capsys.readouterr()
    assert json.loads(captured.out)["in_hypothesis"] is False
    assert "warning" in captured.err


def test_bad_stream_file_exits_2_with_line(tmp_path, capsys):
    s = tmp_path / "bad.txt"
    s.write_text("# n=3 T=2 model=general\n1,1,1\n2,9,1\n")
    assert main(["run", "--estimator", "counter", "--stream", str(s), "--rho", "1",
                 "--out", str(tmp_path / "o.csv")]) == 2
    assert "line 3" in capsys.readouterr().err


def test_evaluate_file_directory_and_bad_trace(tmp_path, capsys):
    d = tmp_path / "runs"
    assert main(["run", "--estimator", "counter", "--gen", "uniform", "--n", "16", "--T", "64", "--rho", "1",
                 "--trials", "3", "--out", str(d)]) == 0
    assert sorted(p.name for p in d.iterdir()) == ["manifest.json", "trace_0000.csv", "trace_0001.csv",
                                                   "trace_0002.csv"]
    capsys.readouterr()
    assert main(["evaluate", str(d / "trace_0000.csv"), "--alpha", "1", "--json"]) == 0
    assert _json(capsys)["violations"] == 0
    assert main(["evaluate", str(d), "--profile", "1,1,1000,1000", "--json"]) == 0
    res = _json(capsys)
    assert res == {"traces": 3, "success_rate": 1.0, "failed": []}
    assert main(["evaluate", str(d), "--alpha", "2", "--json"]) == 0
    assert _json(capsys)["beta_max"] >= 0
    assert main(["evaluate", str(d), "--profile", "1,1,0", "--json"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("t,exact,estimate\n1,2\n")
    assert main(["evaluate", str(bad), "--alpha", "1"]) == 2
    assert "line 2" in capsys.readouterr().err


def test_manifest_replay_and_seed_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DPTURNSTILE_SEED", "17")
    out = tmp_path / "m.csv"
    assert main(["run", "--estimator", "minhash", "--gen", "phased", "--n", "64", "--T", "64", "--rho", "1",
                 "--out", str(out)]) == 0
    man = json.loads((tmp_path / "m.manifest.json").read_text())
    assert man["config"]["seed"] == 17 and man["rho"] == 1.0
    first = out.read_bytes()
    assert main(["run", "--manifest", str(tmp_path / "m.manifest.json"), "--out", str(tmp_path / "r.csv")]) == 0
    assert (tmp_path / "r.csv").read_bytes() == first
    man["trials"][0]["trace_sha256"] = "0" * 64
    (tmp_path / "x.json").write_text(json.dumps(man))
    assert main(["run", "--manifest", str(tmp_path / "x.json"), "--out", str(tmp_path / "y.csv")]) == 1


def test_epsilon_delta_budget_is_recorded(tmp_path, capsys):
    out = tmp_path / "c.csv"
    assert main(["run", "--estimator", "counter", "--gen", "uniform", "--n", "8", "--T", "32", "--epsilon", "1",
                 "--delta", "1e-6", "--out", str(out), "--json"]) == 0
    man = json.loads((tmp_path / "c.manifest.json").read_text())
    assert man["approx_dp"]["epsilon"] == pytest.approx(1.0, rel=1e-9)
    assert _json(capsys)["composed_rho"] == pytest.approx(man["rho"], abs=1e-12)


def test_validate_reports(tmp_path, capsys):
    report = tmp_path / "r.json"
    assert main(["validate", "lemma3", "--nnz", "50", "--trials", "100", "--out", str(report)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["lemma"] == "lemma3" and res["empirical"] >= 0.9
    assert json.loads(report.read_text()) == res
    assert main(["validate", "lemma2", "--nnz", "5", "--n", "64", "--trials", "200"]) == 0
    assert json.loads(capsys.readouterr().out)["empirical"] <= 0.05
    assert main(["validate", "lemma1", "--nnz", "10", "--n", "64", "--trials", "10"]) == 3
    assert main(["validate", "lemma1", "--nnz", "100", "--n", "10", "--trials", "10"]) == 2


@pytest.mark.parametrize("target", ["counter", "minhash", "domain-reduction", "f2"])
def test_bench(target, capsys):
    assert main(["bench", target, "--T", "32", "--n", "16", "--width", "8", "--json"]) == 0
    res = _json(capsys)
    assert res["target"] == target and res["seconds"] > 0 and res["state_words"] > 0


def test_run_config_round_trip_and_trial_seeds():
    cfg = ex.RunConfig("f2", seed=5, rho=0.5, generator=ex.GeneratorSpec("uniform", 8, 16), trials=3)
    assert ex.RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    seeds = [ex.trial_seed(5, i) for i in range(3)]
    assert seeds[0] == 5 and len(set(seeds)) == 3
    assert seeds == [ex.trial_seed(5, i) for i in range(3)]
    with pytest.raises(ValueError):
        ex.RunConfig("f2", rho=1.0)
    with pytest.raises(ValueError):
        ex.RunConfig("sketch", rho=1.0, generator=ex.GeneratorSpec("uniform", 8, 16))


def test_budget_audit_every_estimator():
    for name in ex.ESTIMATORS:
        model = "general" if name == "domain-reduction" else "strict"
        cfg = ex.RunConfig(name, rho=0.7, alpha=0.5, generator=ex.GeneratorSpec("uniform", 16, 32, model))
        meta, _ = ex.load_stream(cfg, 0)
        assert abs(ex.audit_budget(cfg, ex.build_estimator(cfg, meta, 0)) - 0.7) <= ex.BUDGET_TOLERANCE
