import json
import textwrap

import numpy as np
import pytest

from lrsdsar import io
from lrsdsar.cli import main
from lrsdsar.config import ConfigError, parse_config

SMALL = """\
schema_version: 1
seed: 3
scene: {side: 32, n_targets: 3}
patch: {window: 8, step: 4}
noise: {snr_db: 10}
solver: {max_outer: 30}
output: {dir: run}
"""

ISAR = """\
schema_version: 1
seed: 4
scene: {side: 32, n_targets: 5, background: none}
solver: {mode: ISAR_SPARSE}
output: {dir: isar}
"""


@pytest.fixture
def root(tmp_path, monkeypatch):
    monkeypatch.setenv("LRSDSAR_OUTPUT_ROOT", str(tmp_path))
    return tmp_path


def write(root, name, text):
    p = root / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def test_simulate_outputs_and_bitwise_repeat(root):
    cfg = write(root, "a.yaml", SMALL)
    assert main(["simulate", cfg]) == 0
    names = ["scene.cmx", "phase_history.cmx", "phase_truth.csv", "truth.json", "meta.json"]
    first = {n: (root / "run" / n).read_bytes() for n in names}
    assert io.read_cmx(root / "run" / "phase_history.cmx").shape == (32, 32)
    assert len(json.loads(first["truth.json"])["target_pixels"]) == 3
    assert main(["simulate", cfg]) == 0
    assert first == {n: (root / "run" / n).read_bytes() for n in names}


def test_full_scale_config_parses():
    cfg = parse_config("schema_version: 1\nscene: {side: 128, n_targets: 4}\npatch: {window: 32, step: 16}\n")
    assert cfg["phase_error"]["peak"] == pytest.approx(np.pi / 2)
    assert cfg["noise"]["snr_db"] == 10


def test_missing_config_file(root, capsys):
    assert main(["simulate", str(root / "nope.yaml")]) == 1
    assert "no such config" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text,line",
    [
        ("schema_version: 1\nscene:\n  side: -3\n", 3),
        ("schema_version: 1\nsolver:\n  mode: SAR\n", 3),
        ("schema_version: 1\nradar:\n  fc: 1\n  colour: red\n", 4),
        ("schema_version: 2\n", 1),
        ("seed: 1\n", 1),
        ("schema_version: 1\nbogus: 1\n", 2),
        ("schema_version: 1\nscene: {side: 30}\npatch:\n  window: 8\n  step: 4\n", 3),
        ("schema_version: 1\nscene: [1, 2\n", 3),
    ],
)
def test_schema_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError, match=rf"^cfg\.yaml:{line}: "):
        parse_config(text, "cfg.yaml")


def test_reconstruct_sar_writes_panels(root):
    cfg = write(root, "a.yaml", SMALL)
    code = main(["reconstruct", cfg])
    out = root / "run"
    summary = json.loads((out / "summary.json").read_text())
    assert code == (0 if summary["converged"] else 2)
    for name in ("original", "defocused", "L", "S", "X"):
        assert (out / f"{name}.pgm").read_bytes().startswith(b"P5\n32 32\n65535\n")
    recs = [json.loads(l) for l in (out / "diagnostics.jsonl").read_text().splitlines()]
    assert len(recs) == summary["iterations"]
    assert summary["entropy"] < summary["entropy_rda"]
    assert len(io.read_phases_csv(out / "phases.csv")) == 32


def test_reconstruct_isar_writes_sparse_only(root):
    assert main(["reconstruct", write(root, "i.yaml", ISAR)]) == 0
    assert (root / "isar" / "S.pgm").exists()
    assert not (root / "isar" / "L.pgm").exists()


def test_max_iteration_exit_code(root):
    cfg = write(root, "m.yaml", SMALL.replace("max_outer: 30", "max_outer: 1, alpha_x: 1.0e-9"))
    assert main(["reconstruct", cfg]) == 2


def test_reconstruct_from_files_matches_simulated(root):
    cfg = write(root, "a.yaml", SMALL)
    main(["simulate", cfg])
    main(["reconstruct", cfg])
    direct = io.read_cmx(root / "run" / "X.cmx")
    files = SMALL.replace("output: {dir: run}", "output: {dir: run2}\ninput: {phase_history: run/phase_history.cmx, meta: run/meta.json}")
    main(["reconstruct", write(root, "b.yaml", files)])
    assert np.array_equal(io.read_cmx(root / "run2" / "X.cmx"), direct)


def test_autofocus_command(root):
    cfg = write(root, "i.yaml", ISAR.replace("isar", "af"))
    assert main(["autofocus", cfg]) in (0, 2)
    rows = (root / "af" / "phase_mse.csv").read_text().splitlines()
    assert rows[0] == "iteration,fast,conventional"
    assert len(io.read_phases_csv(root / "af" / "phases_fast.csv")) == 32


def test_bench_single_cell(root):
    text = SMALL + "bench: {sizes: [32], snrs: [10], methods: [fast], repeats: 1, iterations: 2}\n"
    assert main(["bench", write(root, "b.yaml", text)]) == 0
    rows = json.loads((root / "run" / "bench.json").read_text())["rows"]
    assert len(rows) == 1 and rows[0]["iterations"] == 2
    assert (root / "run" / "bench.csv").read_text().startswith("size,snr_db,method")


def test_export(root):
    io.write_cmx(root / "m.cmx", np.array([[1, 2j]]))
    text = "schema_version: 1\nexport: {source: m.cmx, format: csv}\noutput: {dir: .}\n"
    assert main(["export", write(root, "e.yaml", text)]) == 0
    assert np.array_equal(io.read_complex_csv(root / "m.csv"), [[1, 2j]])


@pytest.mark.parametrize("d", ["../escape", "/tmp"])
def test_output_cannot_leave_root(root, d, capsys):
    cfg = write(root, "x.yaml", SMALL.replace("dir: run", f"dir: '{d}'"))
    assert main(["simulate", cfg]) == 1
    assert "escapes" in capsys.readouterr().err


def test_export_source_cannot_leave_root(root):
    text = "schema_version: 1\nexport: {source: ../../etc/passwd}\noutput: {dir: .}\n"
    assert main(["export", write(root, "e.yaml", text)]) == 1
