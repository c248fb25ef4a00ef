import csv
import io
import json

import numpy as np
import pytest

from codedlab.cli import main, render_csv
from codedlab.config import ConfigError, parse_config
from codedlab.experiments import ResultRow, run

GC = """
# BRS example
[gc]
scheme = brs
n = 8
k = 4
s = 2
seed = 1
"""

SKETCH = """
[sketch]
method = cr
q = 16, 64, 256
trials = 50
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def data_rows(text):
    lines = [ln for ln in text.splitlines(keepends=True) if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


# parsing

def test_minimal_gc_config_is_valid():
    cfg = parse_config(GC)
    assert cfg.command == "gc" and cfg.seed == 1
    assert cfg.params["n"] == 8 and cfg.params["scheme"] == "brs"


def test_unknown_key_names_key_and_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("[gc]\nscheme = brs\nn = 8\nk = 4\ns = 2\nfoo = 1\n")
    assert (6, "unknown key 'foo'") in exc.value.errors


def test_all_errors_reported_together():
    with pytest.raises(ConfigError) as exc:
        parse_config("[gc]\nscheme = brs\nn = 8\nk = four\ns = 9\nfoo = 1\nbar\n")
    lines = sorted(ln for ln, _ in exc.value.errors)
    assert lines == [4, 5, 6, 7]


def test_semantic_s_at_least_n():
    with pytest.raises(ConfigError) as exc:
        parse_config("[gc]\nscheme = frc\nn = 4\ns = 4\n")
    assert any("smaller than n" in msg for _, msg in exc.value.errors)


def test_missing_required_key():
    with pytest.raises(ConfigError) as exc:
        parse_config("[cmm]\nscheme = matdot\n")
    assert any("'k'" in msg for _, msg in exc.value.errors)


def test_shared_keys_and_section_selection():
    text = "seed = 5\n[gc]\nscheme = frc\nn = 4\ns = 1\n[sketch]\nmethod = srht\n"
    assert parse_config(text, "gc").seed == 5
    assert parse_config(text, "sketch").params["method"] == "srht"
    with pytest.raises(ConfigError):
        parse_config(text)  # two sections, no command given
    with pytest.raises(ConfigError):
        parse_config(text, "cmm")


def test_srht_grid_checked_against_n():
    with pytest.raises(ConfigError):
        parse_config("[sketch]\nmethod = srht\nN = 64\nq = 16,128\n")


# running

def test_gc_grid_over_all_sets():
    rows = run(parse_config(GC)).rows
    assert len(rows) == 28
    assert all(r.metric == "gc_error" and r.value <= 1e-8 for r in rows)
    assert len({r.axes for r in rows}) == 28


def test_sketch_median_strictly_decreasing():
    rows = run(parse_config(SKETCH)).rows
    med = [r.value for r in rows if r.metric == "amm_median_error"]
    assert len(med) == 3 and med[0] > med[1] > med[2]


def test_result_row_rejects_non_finite():
    with pytest.raises(ValueError):
        ResultRow("x", (), "m", float("nan"), 0, 0.0)


def test_csv_format():
    cfg = parse_config(GC)
    text = render_csv(run(cfg).rows, cfg)
    assert text.startswith("# codedlab")
    assert "# scheme = brs\r\n" in text
    rows = data_rows(text)
    assert list(rows[0]) == ["experiment_id", "stragglers", "metric", "value", "seed", "timestamp"]
    assert rows[0]["stragglers"] == "0 1"
    assert len(rows) == 28


def test_float_formatting_round_trips():
    cfg = parse_config(SKETCH)
    rows = run(cfg).rows
    parsed = data_rows(render_csv(rows, cfg))
    for row, rec in zip(rows, parsed):
        assert float(rec["value"]) == row.value


def test_csv_quoting():
    cfg = parse_config(GC)
    text = render_csv([ResultRow('id,"x"', (("stragglers", "0 1"),), "m", 1.0, 0, 0.0)], cfg)
    assert '"id,""x"""' in text
    assert data_rows(text)[0]["experiment_id"] == 'id,"x"'


# entry point

def test_main_writes_csv_and_is_deterministic(tmp_path):
    cfg = write(tmp_path, "gc.cfg", GC)
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    assert main(["gc", "--config", cfg, "--out", str(tmp_path / "a" / "out.csv")]) == 0
    assert main(["gc", "--config", cfg, "--out", str(tmp_path / "b" / "out.csv")]) == 0
    a, b = (tmp_path / "a" / "out.csv").read_bytes(), (tmp_path / "b" / "out.csv").read_bytes()
    assert a.replace(b"/a/", b"/b/") == b


def test_main_seed_override_changes_output(tmp_path, capsys):
    cfg = write(tmp_path, "cmm.cfg", "[cmm]\nscheme = independent\nk = 4\nr = 2\ntrials = 2\n")
    main(["cmm", "--config", cfg, "--seed", "1"])
    one = capsys.readouterr().out
    main(["cmm", "--config", cfg, "--seed", "2"])
    two = capsys.readouterr().out
    assert "# seed = 1" in one and "# seed = 2" in two and one != two


def test_main_jsonl(tmp_path, capsys):
    cfg = write(tmp_path, "gc.cfg", GC)
    assert main(["gc", "--config", cfg, "--format", "jsonl"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert json.loads(lines[0])["config"]["scheme"] == "brs"
    recs = [json.loads(ln) for ln in lines[1:]]
    assert len(recs) == 28 and recs[0]["axes"] == {"stragglers": "0 1"}


def test_exit_code_config_error(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "[gc]\nscheme = brs\nfoo = 1\n")
    assert main(["gc", "--config", cfg]) == 2
    assert ":3: unknown key 'foo'" in capsys.readouterr().err


def test_exit_code_io_errors(tmp_path, capsys):
    assert main(["gc", "--config", str(tmp_path / "missing.cfg")]) == 4
    cfg = write(tmp_path, "gc.cfg", GC)
    assert main(["gc", "--config", cfg, "--out", str(tmp_path / "no" / "dir" / "x.csv")]) == 4
    assert "no/dir/x.csv" in capsys.readouterr().err


def test_exit_code_unrecoverable(tmp_path, capsys):
    cfg = write(tmp_path, "u.cfg", "[cmm]\nscheme = matdot\nk = 4\nn = 9\npolicy = fixed-set\nstragglers = 0,1,2\n")
    out = tmp_path / "u.csv"
    assert main(["cmm", "--config", cfg, "--out", str(out)]) == 3
    rows = data_rows(out.read_text())
    assert rows[0]["metric"] == "unrecoverable" and float(rows[0]["value"]) == 1


def test_threads_do_not_change_output(tmp_path, monkeypatch):
    cfg = write(tmp_path, "s.cfg", SKETCH)
    monkeypatch.setenv("CODEDLAB_THREADS", "1")
    main(["sketch", "--config", cfg, "--out", str(tmp_path / "one.csv")])
    monkeypatch.setenv("CODEDLAB_THREADS", "4")
    main(["sketch", "--config", cfg, "--out", str(tmp_path / "four.csv")])
    one = (tmp_path / "one.csv").read_text().replace("one.csv", "")
    four = (tmp_path / "four.csv").read_text().replace("four.csv", "")
    assert one == four


@pytest.mark.parametrize("experiment, extra", [
    ("sketch", "method = gaussian\nq = 8,32\ntrials = 5\n"),
    ("gc", "scheme = expander\ns = 1\n"),
    ("descend", "scheme = brs\nn = 8\nk = 4\ns = 2\niterations = 20\n"),
    ("cmm", "scheme = oversketch\nq = 8\nb = 4\ne = 1\ntrials = 3\n"),
])
def test_report_writes_deterministic_figure(tmp_path, experiment, extra):
    cfg = write(tmp_path, "r.cfg", f"[report]\nexperiment = {experiment}\n{extra}")
    pngs = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        assert main(["report", "--config", cfg, "--out", str(tmp_path / sub / "r.csv")]) == 0
        pngs.append((tmp_path / sub / "r.png").read_bytes())
    assert pngs[0][:8] == b"\x89PNG\r\n\x1a\n" and pngs[0] == pngs[1]


def test_report_needs_output_path(tmp_path):
    cfg = write(tmp_path, "r.cfg", "[report]\nexperiment = gc\nscheme = frc\nn = 4\ns = 1\n")
    assert main(["report", "--config", cfg]) == 2


def test_descend_rows(tmp_path):
    cfg = parse_config("[descend]\nscheme = centralized\niterations = 30\n")
    rows = run(cfg).rows
    losses = [r.value for r in rows if r.metric == "loss"]
    assert len(losses) == 31 and np.all(np.diff(losses) <= 1e-9)
    assert [r.metric for r in rows][-1] == "loss_ratio"
