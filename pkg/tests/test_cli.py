import csv
import json
import shutil
import subprocess
import textwrap

import pytest

from cdlab import cli, config
from cdlab.errors import ConfigError


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[-1].startswith("# status:")
    return list(csv.reader(lines[:-1])), lines[-1]


def run(tmp_path, command, cfg_text, *extra, out="out"):
    cfg = write(tmp_path, cfg_text)
    code = cli.main([command, "--config", str(cfg), "--out", str(tmp_path / out), "--workers", "1", *extra])
    return code, tmp_path / out


MODEL3 = """
model:
  lambda0: 1.0
  valency: 0.9
  n: 3
  trunc: 64
  mu: [[0, 1, 1.0, 0.0], [1, 2, 0.5, -0.5]]
"""


def test_fmt():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(-0.0) == "0"
    assert cli.fmt(True) == "true" and cli.fmt(None) == "" and cli.fmt(3) == "3"


def test_defaults_validate():
    cfg = config.load()
    spec = config.model_spec(cfg)
    assert spec.n == 2 and spec.valency == 1.0


@pytest.mark.parametrize("text,path", [
    ("model: {lambda0: -1, valency: 1, n: 2}", "model/lambda0"),
    ("model: {lambda0: 1, valency: 1, n: 2, mu: [[1, 0, 1.0, 0.0]]}", "model/mu/0"),
    ("geometry: {angles: 0}", "geometry/angles"),
    ("bogus: 1", "<root>"),
])
def test_config_errors_name_field(text, path):
    with pytest.raises(ConfigError) as info:
        config.load(text=text)
    assert info.value.path == path


def test_yaml_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        config.load(text="model:\n  lambda0: [1,\n  n: 2\n")
    assert "line" in info.value.path


def test_validate_command(tmp_path, capsys):
    cfg = write(tmp_path, MODEL3)
    assert cli.main(["validate", "--config", str(cfg)]) == 0
    assert "valid" in capsys.readouterr().out
    bad = write(tmp_path, "model: {lambda0: 1}", "bad.yaml")
    assert cli.main(["validate", "--config", str(bad)]) == cli.EXIT_USAGE


def test_missing_config_and_out(tmp_path):
    assert cli.main(["classify", "--out", str(tmp_path)]) == cli.EXIT_USAGE
    cfg = write(tmp_path, MODEL3)
    assert cli.main(["classify", "--config", str(cfg)]) == cli.EXIT_USAGE
    assert cli.main(["nonsense"]) == cli.EXIT_USAGE


def test_classify_marks_forced_zero(tmp_path):
    code, out = run(tmp_path, "classify", MODEL3)
    assert code == 0
    rows, status = read_csv(out / "classify.csv")
    assert status == "# status: ok"
    tags = {(r[0], r[1]): r[4] for r in rows[1:]}
    assert tags[("0", "2")] == "forced-zero"
    assert tags[("0", "1")] == "bounded-nonzero"
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["status"] == "ok" and "classify.csv" in manifest["outputs"]


def test_unbounded_entry_is_structured(tmp_path):
    text = MODEL3.replace("[1, 2, 0.5, -0.5]", "[0, 2, 1.0, 0.0]")
    code, out = run(tmp_path, "assemble", text)
    assert code == cli.EXIT_MODEL
    rows, status = read_csv(out / "error.csv")
    assert rows[1][0] == "unbounded_entry"
    assert json.loads((out / "run_manifest.json").read_text())["status"] == "error"


def test_reduce_needs_valency_two(tmp_path):
    code, out = run(tmp_path, "reduce", MODEL3.replace("0.9", "1.5"))
    assert code == cli.EXIT_MODEL
    assert read_csv(out / "error.csv")[0][1][0] == "valency_too_small"


def test_assemble_outputs(tmp_path):
    code, out = run(tmp_path, "assemble", MODEL3.replace("0.9", "1.0"))
    assert code == 0
    rows, _ = read_csv(out / "assemble.csv")
    vals = dict(rows[1:])
    assert float(vals["intertwining_residual"]) <= 1e-10
    assert vals["within_tolerance"] == "true"
    assert len(read_csv(out / "blocks.csv")[0]) == 4


def test_geometry_rank_one_curvature(tmp_path):
    text = """
    model: {lambda0: 2.0, valency: 1.0, n: 1, trunc: 128}
    geometry: {radii: [0.3], angles: 4, origin: true, trunc: 128}
    """
    code, out = run(tmp_path, "geometry", text)
    assert code == 0
    rows, _ = read_csv(out / "geometry.csv")
    header, first = rows[0], rows[1]
    assert float(first[header.index("re_w")]) == 0.0
    assert float(first[header.index("atom_curvature_0")]) == -2.0
    assert float(first[header.index("curvature_00_re")]) == pytest.approx(-2.0, rel=1e-5)
    assert len(rows) == 1 + 5


def test_sylvester_box(tmp_path):
    text = "sylvester: {lambda0: [1.0], valency: [1.0, 2.0], k: [0, 1], trunc: 256, fit_trunc: 1024}"
    code, out = run(tmp_path, "sylvester", text)
    assert code == 0
    rows, _ = read_csv(out / "sylvester.csv")
    h = rows[0]
    assert len(rows) == 5
    for r in rows[1:]:
        verdict = r[h.index("verdict")]
        assert verdict == ("bounded" if float(r[h.index("valency")]) >= 2 else "divergent")


def test_reduce_and_commutant(tmp_path):
    code, out = run(tmp_path, "reduce", MODEL3.replace("0.9", "2.0"), "--trunc", "64")
    assert code == 0
    rows, _ = read_csv(out / "reduce.csv")
    assert [r[0] for r in rows[1:]] == ["64", "128"]
    code, out = run(tmp_path, "commutant", MODEL3.replace("0.9", "1.0") + "commutant: {degrees: [0, 2, 5], trunc: 128}\n",
                    out="comm")
    assert code == 0
    rows, _ = read_csv(out / "commutant.csv")
    assert all(float(r[1]) <= 1e-7 for r in rows[1:])
    idem, _ = read_csv(out / "idempotents.csv")
    assert sum(r[1] == "true" for r in idem[1:]) == 2


def test_powerbound_small(tmp_path):
    text = """
    model: {lambda0: 0.5, valency: 1.0, n: 1}
    powerbound: {n_max: 100, trunc: 1024, points: 10}
    """
    code, out = run(tmp_path, "powerbound", text)
    assert code == 0
    rows, _ = read_csv(out / "powerbound_summary.csv")
    assert rows[1][1] == "divergent"


def test_outputs_are_reproducible(tmp_path):
    text = MODEL3.replace("0.9", "1.0") + "commutant: {degrees: [1, 3], trunc: 64}\n"
    run(tmp_path, "commutant", text, "--seed", "7", out="a")
    run(tmp_path, "commutant", text, "--seed", "7", out="b")
    for name in ("commutant.csv", "idempotents.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_console_script(tmp_path):
    exe = shutil.which("cdlab")
    if exe is None:
        pytest.skip("console script not installed")
    cfg = write(tmp_path, MODEL3)
    proc = subprocess.run([exe, "classify", "--config", str(cfg), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "classify.csv").exists()
