import math

import pytest

from covlab import io
from covlab.cli import main, parse_config
from covlab.core_metric import circle
from covlab.errors import ConfigError


def _cfg(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_parse_config_types_and_comments():
    vals = parse_config("family = circle  # loop\nj_list = 1, 2,3\nrefine_tol = 0.1\n\n")
    assert vals == {"family": "circle", "j_list": [1, 2, 3], "refine_tol": 0.1}


@pytest.mark.parametrize("text,where", [
    ("family = circle\nfoo = 1\n", "line 2, field 'foo'"),
    ("radius = wide\n", "line 1, field 'radius'"),
    ("radius 3\n", "line 1"),
    ("j = 1\nj = 2\n", "line 2, field 'j'"),
])
def test_parse_config_errors_name_line_and_field(text, where):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert where in str(exc.value)


def test_malformed_config_exits_1(tmp_path, capsys):
    cfg = _cfg(tmp_path, "family = circle\nfoo = 1\n")
    assert main(["covspec", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "foo" in capsys.readouterr().err


def test_missing_required_key_exits_1(tmp_path):
    assert main(["covspec", "--out", str(tmp_path / "o")]) == 1


def test_cover_run_and_byte_identical_rerun(tmp_path):
    cfg = _cfg(tmp_path, "family = circle\nmesh = 0.05\nradius = 10\ndeltas = 1.0, 3.3\n")
    outs = [tmp_path / "a", tmp_path / "b"]
    for o in outs:
        assert main(["cover", "--config", str(cfg), "--out", str(o)]) == 0
    for name in ("cover.csv", "lifts_vs_delta.csv", "summary.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    rows = (outs[0] / "cover.csv").read_text().splitlines()[1:]
    lifts = [int(r.split(",")[2]) for r in rows]
    assert lifts == [3, 1]


def test_covspec_writes_spectrum(tmp_path):
    cfg = _cfg(tmp_path, "family = circle\nmesh = 0.05\ndelta_min = 2.5\ndelta_max = 3.6\nradius = 8\n")
    out = tmp_path / "o"
    assert main(["covspec", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "status.txt").read_text().strip() == "0"
    lines = (out / "space_spectrum.csv").read_text().splitlines()
    assert lines[0].startswith("delta_low,delta_high")
    lo, hi = map(float, lines[1].split(",")[:2])
    assert lo - 0.05 <= math.pi <= hi + 0.05


def test_budget_exhaustion_exits_3(tmp_path):
    cfg = _cfg(tmp_path, "family = circle\nmesh = 0.05\nradius = 50\ndelta = 1.0\n")
    out = tmp_path / "o"
    assert main(["cover", "--config", str(cfg), "--out", str(out), "--budget-nodes", "300"]) == 3
    assert (out / "PARTIAL").exists()


def test_point_budget_exits_3(tmp_path):
    cfg = _cfg(tmp_path, "family = sphere2\nmesh = 0.1\ndelta = 1.0\n")
    assert main(["cover", "--config", str(cfg), "--out", str(tmp_path / "o"),
                 "--budget-points", "50"]) == 3


def test_invariant_failure_exits_2(tmp_path, capsys):
    cfg = _cfg(tmp_path, "family = thin_tori\nj_list = 1, 2\nD0 = 4.0\n")
    out = tmp_path / "o"
    assert main(["sequence", "--config", str(cfg), "--out", str(out)]) == 2
    assert "diameter bound" in capsys.readouterr().err
    assert (out / "status.txt").read_text().strip() == "2"


def test_flatbound_chain(tmp_path):
    cfg = _cfg(tmp_path, "handles_j = 1, 2, 3\n")
    out = tmp_path / "o"
    assert main(["flatbound", "--config", str(cfg), "--out", str(out)]) == 0
    rows = (out / "flatbound.csv").read_text().splitlines()[1:]
    bounds = [float(r.split(",")[6]) for r in rows]
    assert bounds == sorted(bounds, reverse=True)


def test_gh_from_space_files(tmp_path):
    a, b = circle(2.0, 0.5), circle(2.0, 0.5)
    io.write_space(a, tmp_path / "a.space")
    io.write_space(b, tmp_path / "b.space")
    cfg = _cfg(tmp_path, f"space_a = {tmp_path / 'a.space'}\nspace_b = {tmp_path / 'b.space'}\n")
    out = tmp_path / "o"
    assert main(["gh", "--config", str(cfg), "--out", str(out)]) == 0
    value, mode, lower = (out / "gh.csv").read_text().splitlines()[1].split(",")
    assert float(value) == 0.0 and mode == "exact"


def test_unreadable_space_file_exits_1(tmp_path):
    cfg = _cfg(tmp_path, f"space_a = {tmp_path / 'missing'}\nspace_b = {tmp_path / 'missing'}\n")
    assert main(["gh", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
