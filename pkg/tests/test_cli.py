import json
from pathlib import Path

import pytest

from bbgky_qem.cli import main

SMALL = """
model:
  schwinger: {nqubits: 8, omega: 1.0, m: 0.5, mu5: 0.2}
grid: {nS: 2000}
mitigation: {r: [0, 3], M: 200, M_T: 100, M_S: 10, seed: 7}
noise: {seed: 3}
"""


def write_config(tmp_path: Path, text: str = SMALL) -> str:
    path = tmp_path / "cfg.yaml"
    path.write_text(text)
    return str(path)


def csvs(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_hierarchy_command(tmp_path, capsys):
    out = tmp_path / "h"
    assert main(["hierarchy", "--out", str(out)]) == 0
    census = json.loads((out / "census.json").read_text())
    assert census["R"] == 3 and [c["size"] for c in census["layers"]] == [16, 72, 104, 120]
    part = json.loads((out / "partition.json").read_text())
    assert part["components_non_identity"] == 16 and part["component_of_Q0_size"] == 120
    assert (out / "graph.dot").exists() and (out / "manifest.json").exists()


def test_hierarchy_without_quench_differs(tmp_path):
    cfg = write_config(tmp_path, "model: {schwinger: {mu5: 0.0}}\nhierarchy: {partition: false}\n")
    assert main(["hierarchy", "--config", cfg, "--out", str(tmp_path / "h")]) == 0
    census = json.loads((tmp_path / "h" / "census.json").read_text())
    assert [c["size"] for c in census["layers"]] != [16, 72, 104, 120]


def test_guard_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, "model: {schwinger: {nqubits: 12}}\n")
    assert main(["hierarchy", "--config", cfg, "--out", str(tmp_path / "g")]) == 3
    assert "guard" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["grid: {nT: 1}\n", "foo: 1\n", "model: {file: missing.txt, observable: j.txt}\n"])
def test_config_exit_code(tmp_path, text, capsys):
    cfg = write_config(tmp_path, text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    assert "config error" in capsys.readouterr().err


def test_metrics_needs_reference(tmp_path):
    assert main(["metrics", "--out", str(tmp_path / "empty")]) == 2


def test_simulate_static_model_is_flat(tmp_path):
    cfg = write_config(tmp_path, "model: {schwinger: {mu5: 0.0}}\ngrid: {nS: 500}\n")
    out = tmp_path / "s"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "J_ED.csv").read_text().splitlines()[1:]
    assert max(abs(float(r.split(",")[1])) for r in rows) < 1e-2


def test_mitigate_then_metrics(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "m"
    assert main(["mitigate", "--config", cfg, "--out", str(out)]) == 0
    for name in ("table.csv", "J_ED.csv", "J_noisy.csv", "mh_r0.csv", "mh_r3.csv", "J_mh_r3.csv", "metrics.csv"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"]["noise"] == 3 and manifest["config"]["mitigation"]["M"] == 200
    assert {a["path"] for a in manifest["artifacts"]} >= {"metrics.csv", "mh_r0.json"}
    assert main(["metrics", "--config", cfg, "--out", str(out)]) == 0
    rows = (out / "metrics_recomputed.csv").read_text().splitlines()
    assert rows[0].startswith("trajectory,L,L_err,P,P_err") and len(rows) == 5
    # the mitigate manifest is kept
    assert json.loads((out / "manifest.json").read_text())["command"] == "mitigate"


def test_manifest_rerun_is_bit_identical(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mitigate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["mitigate", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert csvs(a) == csvs(b) and len(csvs(a)) >= 8


def test_seed_flag_changes_outputs(tmp_path):
    cfg = write_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--out", str(b), "--seed", "4"]) == 0
    assert (a / "table.csv").read_bytes() != (b / "table.csv").read_bytes()
    assert (a / "J_ED.csv").read_bytes() == (b / "J_ED.csv").read_bytes()


def test_reproduce_preset_and_rerun(tmp_path):
    cfg = write_config(tmp_path, SMALL.replace("r: [0, 3]", "r: [0, 1, 2, 3]").replace("M: 200, M_T: 100", "M: 60, M_T: 20"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["reproduce", "--preset", "fig6-like", "--config", cfg, "--seeds", "1", "2", "--jobs", "2", "--out", str(a)]) == 0
    table = (a / "table.csv").read_text().splitlines()
    assert len(table) == 1 + 2 * 4
    assert (a / "m0.5_mu0.2_seed2" / "z.dat").exists() and (a / "L_m0.5_mu0.1.gp").exists()
    z = (a / "m0.5_mu0.2_seed1" / "z.dat").read_text().splitlines()
    assert z[0] == "# r z_next z_full" and len(z) == 5
    # replayed serially from the manifest alone
    assert main(["reproduce", "--config", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert csvs(a) == csvs(b)
