import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from cotransport.cli import (
    ERROR_COLUMNS,
    ESTIMATE_COLUMNS,
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_OK,
    LYAPUNOV_COLUMNS,
    TRAJECTORY_COLUMNS,
    emit_logs,
    main,
)
from cotransport.config import (
    PRESETS,
    build_config,
    deep_merge,
    dump_tree,
    load_config,
    load_preset,
    preset_tree,
    resolve_tree,
)
from cotransport.sim import ConfigError

from conftest import preset_run

SHORT = ["--set", "events=[]", "--duration", "0.01"]


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


def write_yaml(path, tree):
    path.write_text(yaml.safe_dump(tree))
    return path


# -- configuration ----------------------------------------------------------


def test_deep_merge_semantics():
    base = {"a": {"b": 1, "c": [1, 2]}, "d": 3}
    out = deep_merge(base, {"a": {"c": [9]}, "e": 4})
    assert out == {"a": {"b": 1, "c": [9]}, "d": 3, "e": 4}
    assert base == {"a": {"b": 1, "c": [1, 2]}, "d": 3}


def test_preset_contents():
    earth, _ = load_preset("earth")
    assert earth.n == 4 and earth.gravity.name == "EARTH"
    assert earth.payload.mass == 5.0
    assert np.array_equal(np.diag(earth.payload.inertia_cm), [1.4255, 1.4255, 0.8411])
    assert np.array_equal(earth.payload.com_offset, [0.74, 0.01, -0.2])
    assert all(np.array_equal(g.l_g, [0.1, 0.0, -0.3]) for g in earth.grasps)
    assert all(v.kind == "hexarotor" for v in earth.vehicles)
    assert [(e.agent, e.t) for e in earth.events] == [(0, 10.0)]
    space, _ = load_preset("space")
    assert space.gravity.name == "ZERO" and all(v.kind == "tug" for v in space.vehicles)
    assert [(e.agent, e.t) for e in space.events] == [(0, 10.0)]


def test_override_dt_changes_only_dt():
    base = preset_tree("earth")
    tree = resolve_tree({"preset": "earth"}, [("sim.dt", 5e-4)])
    assert tree["sim"]["dt"] == 5e-4
    tree["sim"]["dt"] = base["sim"]["dt"]
    assert tree == base


def test_file_merges_over_preset(tmp_path):
    path = write_yaml(tmp_path / "c.yaml", {"preset": "space", "sim": {"duration": 12.0}})
    cfg, tree = load_config(path)
    assert cfg.duration == 12.0 and tree["sim"]["dt"] == preset_tree("space")["sim"]["dt"]


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r"payload\.colour"):
        resolve_tree({"preset": "earth", "payload": {"colour": "red"}})
    with pytest.raises(ConfigError, match=r"gains\.nope"):
        resolve_tree({"preset": "earth"}, [("gains.nope", 1.0)])


def test_malformed_value_names_key_and_unit():
    with pytest.raises(ConfigError, match=r"payload\.mass.*kg"):
        build_config(resolve_tree({"preset": "earth", "payload": {"mass": -1.0}}))
    with pytest.raises(ConfigError, match=r"sim\.dt.*\bs\b"):
        resolve_tree({"preset": "earth", "sim": {"dt": "fast"}})


def test_resolved_tree_is_fixed_point(tmp_path):
    for name in PRESETS:
        tree = resolve_tree({"preset": name}, [("sim.dt", 2e-3), ("traj.omega_y", 0.7)])
        text = dump_tree(tree)
        path = tmp_path / f"{name}.resolved"
        path.write_text(text)
        cfg2, tree2 = load_config(path)
        assert tree2 == tree and dump_tree(tree2) == text
        assert cfg2.dt == 2e-3 and cfg2.traj.omega_y == 0.7


# -- command line ----------------------------------------------------------


def test_preset_list(capsys):
    assert main(["preset", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == sorted(PRESETS)


def test_config_and_preset_conflict(tmp_path, capsys):
    path = write_yaml(tmp_path / "c.yaml", {"preset": "earth"})
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(path), "--preset", "earth"])
    assert exc.value.code == 2
    assert "not allowed with" in capsys.readouterr().err


def test_validate(tmp_path, capsys):
    good = write_yaml(tmp_path / "good.yaml", {"preset": "earth"})
    assert main(["validate", "--config", str(good)]) == EXIT_OK
    bad = write_yaml(tmp_path / "bad.cfg", {"preset": "earth", "payload": {"mass": -5.0}})
    assert main(["validate", "--config", str(bad)]) == EXIT_CONFIG
    assert "payload.mass" in capsys.readouterr().err


def test_bad_override_is_config_error(tmp_path, capsys):
    assert main(["run", "--preset", "earth", "--out", str(tmp_path), "--set", "sim.dtt=1"]) == EXIT_CONFIG
    assert "sim.dtt" in capsys.readouterr().err
    assert main(["run", "--preset", "earth", "--out", str(tmp_path), "--disable", "two@5"]) == EXIT_CONFIG


def test_disable_adds_to_preset_events(tmp_path):
    out = tmp_path / "o"
    code = main(["run", "--preset", "space", "--out", str(out), "--duration", "12.0", "--dt", "0.01", "--disable", "2@5.0"])
    assert code == EXIT_OK
    events = yaml.safe_load((out / "config.resolved").read_text())["events"]
    assert {(e["agent"], e["t"]) for e in events} == {(0, 10.0), (2, 5.0)}
    _, rows = read_csv(out / "estimates_agent2.csv")
    assert [int(r[1]) for r in rows] == [1] * 500 + [0] * 700


def test_one_step_run_files(tmp_path):
    out = tmp_path / "one"
    assert main(["run", "--preset", "earth", "--out", str(out), "--set", "events=[]", "--duration", "0.001"]) == EXIT_OK
    names = sorted(p.name for p in out.iterdir())
    assert names == sorted(
        ["trajectory.csv", "errors.csv", "lyapunov.csv", "summary.json", "config.resolved"]
        + [f"estimates_agent{i}.csv" for i in range(4)]
    )
    for name, cols in [
        ("trajectory.csv", TRAJECTORY_COLUMNS),
        ("errors.csv", ERROR_COLUMNS),
        ("lyapunov.csv", LYAPUNOV_COLUMNS),
        ("estimates_agent0.csv", ESTIMATE_COLUMNS),
    ]:
        header, rows = read_csv(out / name)
        assert header == cols and len(rows) == 1


def test_repeated_runs_byte_identical(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        assert main(["run", "--preset", "earth", "--out", str(d), "--set", "events=[]", "--duration", "0.05"]) == EXIT_OK
    for p in dirs[0].iterdir():
        assert p.read_bytes() == (dirs[1] / p.name).read_bytes(), p.name


def test_csv_values_round_trip_exactly(tmp_path):
    log = preset_run("earth")[0]
    emit_logs(log, tmp_path, dump_tree(preset_tree("earth")))
    _, rows = read_csv(tmp_path / "lyapunov.csv")
    assert [r[1] for r in rows] == [rec.V for rec in log.records]
    _, rows = read_csv(tmp_path / "estimates_agent3.csv")
    assert np.array_equal(np.array([r[2:12] for r in rows]), np.array([rec.phi[3] for rec in log.records]))


def test_io_error_exit(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--preset", "earth", "--out", str(blocker / "sub"), *SHORT]) == EXIT_IO
    assert str(blocker) in capsys.readouterr().err
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_divergence_exit(tmp_path):
    out = tmp_path / "div"
    code = main(["run", "--preset", "earth", "--out", str(out), "--plant", "rotor", "--set", "events=[]", "--duration", "1.0"])
    assert code == 3
    summary = json.loads((out / "summary.json").read_text())
    assert summary["termination"] == "Diverged" and summary["diverged_at"] is not None


# -- summary recomputation ---------------------------------------------------


def recompute_summary(out: Path) -> dict:
    """Summary rebuilt from the emitted files alone."""
    tree = yaml.safe_load((out / "config.resolved").read_text())
    payload = tree["payload"]
    n = len(tree["agents"])
    _, err = read_csv(out / "errors.csv")
    _, lyap = read_csv(out / "lyapunov.csv")
    est = [read_csv(out / f"estimates_agent{i}.csv")[1] for i in range(n)]
    ep = [float(np.linalg.norm(r[1:4])) for r in err]
    tail = math.ceil(len(ep) / 10)
    t_fail = min((e["t"] for e in tree["events"]), default=None)
    post = [r[12] for r in err if t_fail is not None and r[0] >= t_fail]
    m = payload["mass"]
    J = np.array(payload["inertia_cm"], dtype=float)
    J = np.diag(J) if J.ndim == 1 else J
    c = np.array(payload["com_offset"])
    Jd = J + m * (c @ c * np.eye(3) - np.outer(c, c))
    truth = np.array([m, *(m * c), Jd[0, 0], Jd[1, 1], Jd[2, 2], Jd[0, 1], Jd[0, 2], Jd[1, 2]]) / n
    final_phi = [rows[-1][2:12] for rows in est]
    final_d = [rows[-1][12:15] for rows in est]
    return {
        "termination": "Completed",
        "steps": len(err),
        "final_ep_norm": ep[-1],
        "steady_ep_norm": float(np.mean(ep[-tail:])),
        "max_s_norm_post_failure": max(post) if post else None,
        "final_phi": final_phi,
        "final_d_hat": final_d,
        "phi_error_norm": [float(np.linalg.norm(np.array(p) - truth)) for p in final_phi],
        "d_error_norm": [float(np.linalg.norm(np.array(d) - np.array(a["grasp_offset"]))) for d, a in zip(final_d, tree["agents"])],
        "v_violations": sum(1 for r in lyap if r[2] > 1e-6),
        "saturation_events": int(sum(r[-1] for rows in est for r in rows)),
        "diverged_at": None,
    }


def test_summary_recomputed_from_csv(tmp_path):
    out = tmp_path / "s"
    args = ["run", "--preset", "earth", "--out", str(out), "--set", "events=[]", "--duration", "0.3", "--disable", "1@0.1"]
    assert main(args) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    expected = recompute_summary(out)
    assert summary.pop("config_hash")
    for key, value in expected.items():
        assert summary[key] == value, key
    assert set(summary) == set(expected)


def test_preset_logs_monotone_and_complete(tmp_path):
    for name in PRESETS:
        log, tree = preset_run(name)
        out = tmp_path / name
        emit_logs(log, out, dump_tree(tree))
        _, lyap = read_csv(out / "lyapunov.csv")
        assert all(r[2] <= 1e-6 for r in lyap)
        assert json.loads((out / "summary.json").read_text())["termination"] == "Completed"
