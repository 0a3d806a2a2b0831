import json

import numpy as np
import pytest

from scsim import io
from scsim.channels import ChoiState, amplitude_damping, choi_from_kraus, identity_channel, random_channel
from scsim.cli import main
from scsim.superchannels import random_superchannel, super_choi


def test_matrix_literal_roundtrip(rng):
    m = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    lit = io.matrix_to_json(m)
    assert lit["rows"] == 3 and lit["cols"] == 5 and len(lit["entries"]) == 15
    assert lit["entries"][1] == [m[0, 1].real, m[0, 1].imag]
    assert np.array_equal(io.matrix_from_json(lit), m)


@pytest.mark.parametrize(
    "bad,msg",
    [
        ({"rows": 2, "cols": 2, "entries": [[1, 0]] * 3}, "expected 4 entries"),
        ({"rows": 2, "cols": 2}, "missing field 'entries'"),
        ({"rows": 0, "cols": 2, "entries": []}, "positive integer"),
        ({"rows": 1, "cols": 1, "entries": [[1, "x"]]}, "entries[0]"),
        ({"rows": 1, "cols": 1, "entries": [[1, 2, 3]]}, "entries[0]"),
    ],
)
def test_matrix_literal_errors(bad, msg):
    with pytest.raises(io.MalformedInput, match=msg.replace("[", r"\[").replace("]", r"\]")):
        io.matrix_from_json(bad)


def test_instance_roundtrips(rng, tmp_path):
    objs = [
        random_channel(2, 3, rng),
        choi_from_kraus(random_channel(3, 2, rng)),
        random_superchannel("rank8", rng),
        super_choi(random_superchannel("full", rng)),
    ]
    for k, obj in enumerate(objs):
        p = tmp_path / f"{k}.json"
        io.save(p, obj)
        back = io.load(p)
        assert type(back) is type(obj)
        assert io.dumps(back) == io.dumps(obj)


def test_kind_inferred_from_keys(rng):
    d = io.channel_to_json(random_channel(2, 2, rng))
    del d["kind"]
    assert io.loads(json.dumps(d)).d_in == 2
    r = io.super_choi_to_json(super_choi(random_superchannel("full", rng)))
    assert r["space_order"] == ["H3", "H2", "H1", "H0"]
    del r["kind"]
    assert io.loads(json.dumps(r)).matrix.shape == (16, 16)


def test_json_error_has_line_and_column():
    with pytest.raises(io.MalformedInput, match="line 3, column"):
        io.loads('{\n "kind": "channel",\n "d_in": ,\n}')


def test_structural_errors():
    with pytest.raises(io.MalformedInput, match="unknown kind"):
        io.loads('{"kind": "teapot"}')
    with pytest.raises(io.MalformedInput, match="shape"):
        io.loads(json.dumps({"kind": "choi", "d_in": 2, "d_out": 2, "choi": io.matrix_to_json(np.eye(3))}))
    with pytest.raises(io.MalformedInput, match="space_order"):
        lit = io.matrix_to_json(np.eye(16) / 16)
        io.loads(json.dumps({"kind": "super_choi", "space_order": ["H0", "H1", "H2", "H3"], **lit}))
    with pytest.raises(io.MalformedInput, match="unknown field"):
        io.loads('{"task": "S_to_4g", "colour": 1}')
    with pytest.raises(io.MalformedInput, match="task.budget"):
        io.loads('{"task": "S_to_4g", "budget": "lots"}')


def test_task_file():
    t = io.loads('{"task": "S_to_4g", "seed": 3, "restarts": 2, "budget": 1000, "tol": 0.005}')
    assert t == {"task": "S_to_4g", "seed": 3, "restarts": 2, "budget": 1000, "tol": 0.005}


def test_write_atomic_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "x.json"
    io.write_atomic(p, "hello\n")
    io.write_atomic(p, "again\n")
    assert p.read_text() == "again\n"
    assert [f.name for f in p.parent.iterdir()] == ["x.json"]


# --- CLI ----------------------------------------------------------------------


def test_generate_superchannel(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["generate", "superchannel", "full", "--seed", "7", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["V"]["rows"] == 8 and data["W"]["rows"] == 32
    assert "rank 16" in capsys.readouterr().out


def test_generate_is_deterministic(tmp_path):
    a, b, c = tmp_path / "a.json", tmp_path / "b.json", tmp_path / "c.json"
    main(["generate", "channel", "--d", "2", "--rank", "4", "--seed", "1", "--out", str(a)])
    main(["generate", "channel", "--d", "2", "--rank", "4", "--seed", "1", "--out", str(b)])
    main(["generate", "channel", "--d", "2", "--rank", "4", "--seed", "2", "--out", str(c)])
    assert a.read_bytes() == b.read_bytes() != c.read_bytes()


@pytest.mark.parametrize(
    "args", [["channel", "--d", "2", "--rank", "4"], ["channel", "--d", "3", "--rank", "2"]]
    + [["superchannel", k] for k in ("full", "rank8", "gen_extreme")]
)
def test_generate_then_validate(tmp_path, args):
    p = tmp_path / "x.json"
    assert main(["generate", *args, "--seed", "5", "--out", str(p)]) == 0
    assert main(["validate", str(p)]) == 0


def test_generate_unknown_class(tmp_path):
    assert main(["generate", "superchannel", "huge", "--out", str(tmp_path / "x.json")]) == 2


def test_validate_identity_channel(tmp_path, capsys):
    p = tmp_path / "id.json"
    io.save(p, identity_channel())
    assert main(["validate", str(p)]) == 0
    out = capsys.readouterr().out
    assert "CPTP ok" in out and "rank 1" in out and "extreme" in out and "unital" in out


def test_validate_superchannel(tmp_path, capsys):
    p = tmp_path / "s.json"
    main(["generate", "superchannel", "full", "--seed", "3", "--out", str(p)])
    capsys.readouterr()
    assert main(["validate", str(p)]) == 0
    out = capsys.readouterr().out
    assert "comb ok" in out and "rank 16" in out and "IP false" in out


def test_validate_reports_nonunitality(tmp_path, capsys):
    p = tmp_path / "ad.json"
    io.save(p, amplitude_damping(0.5))
    assert main(["validate", str(p), "--format", "json"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["unital"] is False and info["extreme"] is True


def test_validate_broken_completeness(tmp_path, capsys):
    d = io.channel_to_json(random_channel(2, 2, np.random.default_rng(0)))
    d["kraus"][0]["entries"][0][0] += 0.5
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    assert main(["validate", str(p)]) == 1
    assert "completeness residual" in capsys.readouterr().out


def test_validate_invalid_choi(tmp_path):
    p = tmp_path / "c.json"
    io.save(p, ChoiState(np.diag([0.5, 0, 0, 0.5]).astype(complex) * 1.2, 2, 2))
    assert main(["validate", str(p)]) == 1


def test_malformed_input_exit_code(tmp_path, capsys):
    p = tmp_path / "m.json"
    p.write_text('{"kind": "channel",\n  "d_in": 2,,\n}')
    assert main(["validate", str(p)]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.json")]) == 2


def test_decompose_channel_file(tmp_path, capsys):
    src, res = tmp_path / "c.json", tmp_path / "r.json"
    main(["generate", "channel", "--rank", "4", "--seed", "2", "--out", str(src)])
    capsys.readouterr()
    assert main(["decompose", str(src), "--terms", "2", "--out", str(res)]) == 0
    assert "best distance" in capsys.readouterr().out
    data = json.loads(res.read_text())
    assert data["kind"] == "result" and data["best_distance"] <= 1e-3 and len(data["best_angles"]) == 28


def test_decompose_dry_run(tmp_path, capsys):
    src = tmp_path / "s.json"
    main(["generate", "superchannel", "full", "--seed", "1", "--out", str(src)])
    capsys.readouterr()
    assert main(["decompose", str(src), "--task", "S_to_2r8", "--dry-run"]) == 0
    assert "= 776" in capsys.readouterr().out


def test_decompose_superchannel_file(tmp_path, capsys):
    src = tmp_path / "s.json"
    main(["generate", "superchannel", "full", "--seed", "4", "--out", str(src)])
    assert main(["decompose", str(src), "--task", "S_to_4g", "--budget", "60000"]) == 0


def test_decompose_budget_exhausted_exit_code(tmp_path):
    t = tmp_path / "t.json"
    t.write_text(json.dumps({"task": "r8_to_2g", "seed": 1, "restarts": 1, "budget": 500, "tol": 0.005}))
    assert main(["decompose", str(t)]) == 3


def test_decompose_task_mismatch(tmp_path):
    src = tmp_path / "c.json"
    main(["generate", "channel", "--out", str(src)])
    assert main(["decompose", str(src), "--task", "S_to_4g"]) == 2
    src3 = tmp_path / "c3.json"
    main(["generate", "channel", "--d", "3", "--rank", "2", "--out", str(src3)])
    assert main(["decompose", str(src3)]) == 2


def test_decompose_is_deterministic(tmp_path):
    src = tmp_path / "c.json"
    main(["generate", "channel", "--seed", "8", "--out", str(src)])
    outs = []
    for k in range(2):
        r = tmp_path / f"r{k}.json"
        main(["decompose", str(src), "--seed", "3", "--tol", "1e-12", "--budget", "2000", "--out", str(r)])
        outs.append(r.read_bytes())
    assert outs[0] == outs[1]


def test_table1_smoke(tmp_path, capsys):
    out = tmp_path / "report"
    args = ["table1", "--instances", "2", "--budget", "150", "--restarts", "1", "--out", str(out)]
    assert main(args) == 0
    table = capsys.readouterr().out
    assert table.count("\n") == 6
    for label in ("S -> 2 S^8", "S -> 4 S^g", "S^8 -> 2 S^g", "S^8 -> 4 S^g"):
        assert label in table
    rows = (out / "table1.csv").read_text().splitlines()
    assert rows[0] == "instance,task,distance,evals" and len(rows) == 1 + 4 * 2
    first = (out / "table1.csv").read_bytes(), (out / "table1.md").read_bytes()
    assert main(args) == 0
    assert ((out / "table1.csv").read_bytes(), (out / "table1.md").read_bytes()) == first


def test_table1_csv_format(capsys):
    assert main(["table1", "--instances", "1", "--budget", "50", "--restarts", "1", "--task", "channel", "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "instance,task,distance,evals" and lines[1].startswith("0,channel,")
