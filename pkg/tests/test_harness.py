import pytest

from cgtsim import cli, harness
from cgtsim.harness import (
    ConfigError,
    compare,
    parse_config,
    preset,
    preset_listing,
    run_experiment,
    run_from_config,
    trace_csv,
    verify_suite,
)

CONFIG_TEXT = """
[topology]
kind = ring
n = 6
directed = false
weights = outdegree
p = 0.1

[problem]
n = 6
dim = 8
rho = 0.05
noise_std = 1.0
seed = 11

[algorithm]
method = cgt
compressor = topk:k=1
K = 120
trace_every = 1

[hyper]
eta = 0.05
gamma = 0.6

[output]
prefix = smoke
certify = false
"""


def test_parse_config_round_trip():
    cfg = parse_config(CONFIG_TEXT)
    assert cfg.topology.n == 6 and not cfg.topology.directed
    assert cfg.problem.dim == 8
    assert cfg.algorithm == "cgt"
    assert cfg.compressor == "topk:k=1"
    assert cfg.hyper.eta == 0.05 and cfg.hyper.gamma == 0.6
    again = parse_config(harness.config_text(cfg))
    assert again == cfg


def test_config_size_mismatch_rejected():
    bad = CONFIG_TEXT.replace("n = 6\ndim = 8", "n = 5\ndim = 8")
    with pytest.raises(ConfigError, match="must equal"):
        parse_config(bad)


def test_config_unknown_algorithm_rejected():
    with pytest.raises(ConfigError, match="method"):
        parse_config(CONFIG_TEXT.replace("method = cgt", "method = sgd"))


def test_config_bad_compressor_named():
    with pytest.raises(ConfigError, match="compressor"):
        parse_config(CONFIG_TEXT.replace("topk:k=1", "gzip"))


def test_config_missing_required_field():
    no_eta = CONFIG_TEXT.replace("eta = 0.05\n", "")
    with pytest.raises(ConfigError, match="hyper.eta"):
        parse_config(no_eta)


def test_run_experiment_writes_csv_and_summary(tmp_path):
    cfg = parse_config(CONFIG_TEXT)
    outcome = run_experiment(cfg, out_dir=tmp_path)
    assert outcome.csv_path.exists()
    lines = outcome.csv_path.read_text().splitlines()
    assert lines[0] == harness.CSV_HEADER
    assert len(lines) == cfg.K + 2  # header + K+1 rows at trace_every=1
    assert "final_residual=" in outcome.summary
    assert "bits=" in outcome.summary


def test_csv_byte_identical_across_runs(tmp_path):
    cfg = parse_config(CONFIG_TEXT)
    a = run_experiment(cfg, out_dir=tmp_path / "a").csv_path.read_bytes()
    b = run_experiment(cfg, out_dir=tmp_path / "b").csv_path.read_bytes()
    assert a == b


def test_total_bits_matches_model():
    cfg = parse_config(CONFIG_TEXT)
    res = run_from_config(cfg)
    from cgtsim.compression import TopK, bit_cost
    per_iter = 6 * 2 * bit_cost(TopK(k=1), 8)
    assert res.trace[-1].bits_sent == per_iter * cfg.K


def test_certificate_report_written(tmp_path):
    cfg = parse_config(CONFIG_TEXT.replace("certify = false", "certify = true"))
    outcome = run_experiment(cfg, out_dir=tmp_path)
    assert outcome.cert_path is not None and outcome.cert_path.exists()
    text = outcome.cert_path.read_text()
    assert "verdict = certified" in text
    assert "profile:" in text


def test_divergence_keeps_partial_trace(tmp_path):
    # oversized step on a biased compressor trips the guard
    from dataclasses import replace
    base = parse_config(CONFIG_TEXT)
    cfg = replace(base, hyper=harness.HyperParams(eta=60.0, gamma=0.6), K=4000)
    outcome = run_experiment(cfg, out_dir=tmp_path)
    assert outcome.diverged
    assert "DIVERGED" in outcome.summary
    assert outcome.csv_path.exists()
    assert len(outcome.csv_path.read_text().splitlines()) >= 3


def test_compare_merges_aligned_traces(tmp_path):
    base = parse_config(CONFIG_TEXT)
    from dataclasses import replace
    other = replace(base, algorithm="efcgt", prefix="smoke-ef")
    path = compare([base, other], out_dir=tmp_path, prefix="merged")
    lines = path.read_text().splitlines()
    assert lines[0] == "k,cgt:topk:k=1,efcgt:topk:k=1"
    assert len(lines) == base.K + 2


def test_compare_single_config_passthrough(tmp_path):
    base = parse_config(CONFIG_TEXT)
    path = compare([base], out_dir=tmp_path)
    assert path.read_text().splitlines()[0] == "k,cgt:topk:k=1"


def test_compare_rejects_mismatched_problems(tmp_path):
    from dataclasses import replace
    base = parse_config(CONFIG_TEXT)
    other = replace(base, problem=replace(base.problem, seed=99))
    with pytest.raises(ConfigError, match="problem"):
        compare([base, other], out_dir=tmp_path)


def test_compare_rejects_mismatched_topology(tmp_path):
    from dataclasses import replace
    base = parse_config(CONFIG_TEXT)
    other = replace(base, topology=replace(base.topology, directed=True))
    with pytest.raises(ConfigError, match="topology"):
        compare([base, other], out_dir=tmp_path)


def test_compare_overlay_error_feedback_wins(tmp_path):
    # directed-ring top-1 pair: the error-feedback run reaches any given
    # residual level in fewer iterations, as the merged overlay shows
    from dataclasses import replace
    a = preset("fig3b-cgt", K=8000, trace_every=40)
    b = replace(preset("fig3b-efcgt", K=8000, trace_every=40), prefix="fig3b-efcgt")
    path = compare([a, b], out_dir=tmp_path, prefix="fig3b-overlay")
    lines = path.read_text().splitlines()
    assert lines[0] == "k,cgt:topk:k=1,efcgt:topk:k=1"
    last = lines[-1].split(",")
    assert float(last[2]) < float(last[1])


def test_presets_cover_the_table_rows():
    names = set(harness.PRESETS)
    expected = {
        "fig1-cgt", "fig2-cgt-directed",
        "fig3a-cgt", "fig3a-efcgt", "fig3b-cgt", "fig3b-efcgt",
        "fig4a-cgt", "fig4a-efcgt", "fig4b-cgt", "fig4b-efcgt",
        "fig5-cgt-normsign", "fig5-efcgt-normsign",
        "fig5-cgt-rescaled", "fig5-efcgt-rescaled",
    }
    assert names == expected
    # table values spot-checked against the parameter tables
    p = preset("fig3b-cgt")
    assert (p.hyper.eta, p.hyper.gamma) == (0.00034, 0.5)
    p = preset("fig3b-efcgt")
    assert (p.hyper.eta, p.hyper.gamma) == (0.0043, 1.0)
    p = preset("fig5-cgt-normsign")
    assert (p.hyper.eta, p.hyper.alpha_x) == (0.01, 0.05)
    p = preset("fig2-cgt-directed")
    assert p.K == 50_000 and p.hyper.eta == 0.0047
    p = preset("fig1-cgt")
    assert p.hyper.eta == 0.09 and not p.topology.directed


def test_preset_listing_mentions_omitted_baseline():
    listing = preset_listing()
    assert "omitted" in listing
    assert "fig1-cgt" in listing


def test_preset_overrides():
    p = preset("fig1-cgt", K=100, trace_every=5, seed=3)
    assert p.K == 100 and p.trace_every == 5 and p.problem.seed == 3
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("fig9-lead")


def test_trace_csv_17_digit_floats():
    from cgtsim.algorithms import TraceRecord
    rec = TraceRecord(k=1, residual=1 / 3, opt_error=0.1, consensus_error=0,
                      tracking_error=0, compress_error_x=0, compress_error_y=0,
                      ef_error_x=0, ef_error_y=0, bits_sent=10)
    text = trace_csv([rec])
    assert "0.33333333333333331" in text


# ---------------------------------------------------------------------------
# CLI


def write_cfg(tmp_path, text=CONFIG_TEXT, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_cli_run_ok(tmp_path, capsys):
    cfgfile = write_cfg(tmp_path)
    rc = cli.main(["run", str(cfgfile), "--out", str(tmp_path / "out")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "final_residual=" in out
    assert (tmp_path / "out" / "smoke.csv").exists()


def test_cli_run_config_error_exit_1(tmp_path, capsys):
    cfgfile = write_cfg(tmp_path, CONFIG_TEXT.replace("method = cgt", "method = foo"))
    rc = cli.main(["run", str(cfgfile)])
    assert rc == 1
    assert "config error" in capsys.readouterr().err


def test_cli_run_missing_file_exit_1(tmp_path, capsys):
    rc = cli.main(["run", str(tmp_path / "nope.cfg")])
    assert rc == 1


def test_cli_run_divergence_exit_2(tmp_path, capsys):
    text = CONFIG_TEXT.replace("eta = 0.05", "eta = 60.0").replace("K = 120", "K = 4000")
    cfgfile = write_cfg(tmp_path, text)
    rc = cli.main(["run", str(cfgfile), "--out", str(tmp_path / "out")])
    assert rc == 2
    assert (tmp_path / "out" / "smoke.csv").exists()


def test_cli_preset_list(capsys):
    rc = cli.main(["preset", "--list"])
    assert rc == 0
    assert "fig1-cgt" in capsys.readouterr().out


def test_cli_preset_unknown_exit_1(capsys):
    rc = cli.main(["preset", "fig99"])
    assert rc == 1


def test_cli_preset_run_small(tmp_path, capsys):
    rc = cli.main(["preset", "fig3a-cgt", "--k", "200", "--out", str(tmp_path)])
    assert rc == 0
    assert (tmp_path / "fig3a-cgt.csv").exists()


def test_cli_compare(tmp_path, capsys):
    a = write_cfg(tmp_path, CONFIG_TEXT, "a.cfg")
    b_text = CONFIG_TEXT.replace("method = cgt", "method = efcgt").replace("prefix = smoke", "prefix = smoke2")
    b = write_cfg(tmp_path, b_text, "b.cfg")
    rc = cli.main(["compare", str(a), str(b), "--out", str(tmp_path), "--prefix", "cmp"])
    assert rc == 0
    assert (tmp_path / "cmp.csv").exists()


def test_cli_certify(tmp_path, capsys):
    cfgfile = write_cfg(tmp_path)
    rc = cli.main(["certify", str(cfgfile), "--out", str(tmp_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "verdict = certified" in out
    assert (tmp_path / "smoke.cert.txt").exists()


def test_cli_out_dir_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(harness.OUT_DIR_ENV, str(tmp_path / "envout"))
    cfgfile = write_cfg(tmp_path)
    rc = cli.main(["run", str(cfgfile)])
    assert rc == 0
    assert (tmp_path / "envout" / "smoke.csv").exists()


def test_verify_suite_all_pass():
    checks = verify_suite(seed=1)
    failed = [c for c in checks if not c.passed]
    assert not failed, harness.verify_report(checks)


def test_cli_verify_exit_0(capsys):
    rc = cli.main(["verify"])
    out = capsys.readouterr().out
    assert rc == 0, out
    assert "checks passed" in out
