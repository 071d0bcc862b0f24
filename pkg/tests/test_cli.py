import json
import hashlib

import pytest

from icecav import cli
from icecav.mdp import MdpConfig, save_scenario

from conftest import TINY_PARAMS, tiny_terminals


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Params + scenario + synth + solve, shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    params = root / "params.json"
    with open(params, "w") as fh:
        json.dump(TINY_PARAMS.as_dict(), fh)
    scenario = root / "scenario.json"
    save_scenario(scenario, MdpConfig(), tiny_terminals(),
                  start=(2000.0, 3000.0, -300.0))
    grid = root / "grid"
    assert cli.main(["synth", "--params", str(params), "--seed", "1",
                     "--out", str(grid)]) == cli.EXIT_OK
    sol = root / "sol"
    assert cli.main(["solve", "--grid", str(grid), "--scenario", str(scenario),
                     "--subsample", "0.25", "--out", str(sol)]) == cli.EXIT_OK
    return root


class TestSynth:
    def test_writes_archive_and_manifest(self, workspace):
        grid = workspace / "grid"
        manifest = json.loads((grid / "run_manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert "manifest.json" in manifest["outputs"]
        assert set(manifest["config_hashes"]) == {"params", "seed"}

    def test_same_seed_reproduces_archive(self, workspace, tmp_path):
        rc = cli.main(["synth", "--params", str(workspace / "params.json"),
                       "--seed", "1", "--out", str(tmp_path / "g2")])
        assert rc == cli.EXIT_OK
        for name in ("u.raw", "v.raw", "w.raw", "wetfrac.raw"):
            assert sha(tmp_path / "g2" / name) == sha(workspace / "grid" / name)

    def test_missing_params_exits_config(self, tmp_path, capsys):
        rc = cli.main(["synth", "--params", str(tmp_path / "nope.json"),
                       "--seed", "1", "--out", str(tmp_path / "g")])
        assert rc == cli.EXIT_CONFIG
        assert "synth" in capsys.readouterr().err


class TestSolve:
    def test_solution_archive_contents(self, workspace):
        sol = workspace / "sol"
        for name in ("values.raw", "policy.raw", "kind.raw", "qtable.raw",
                     "solve_meta.json", "run_manifest.json"):
            assert (sol / name).exists()
        meta = json.loads((sol / "solve_meta.json").read_text())
        assert meta["solve"]["converged"] is True
        assert meta["lattice"]["offsets"] == list(range(-7, 8))

    def test_zero_tolerance_exits_config(self, workspace, tmp_path, capsys):
        rc = cli.main(["solve", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--tol", "0", "--out", str(tmp_path / "s")])
        assert rc == cli.EXIT_CONFIG

    def test_bad_stride_exits_config(self, workspace, tmp_path):
        rc = cli.main(["solve", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--stride", "840,840", "--out", str(tmp_path / "s")])
        assert rc == cli.EXIT_CONFIG

    def test_exhausted_sweeps_exit_numerical(self, workspace, tmp_path, capsys):
        rc = cli.main(["solve", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--subsample", "0.25", "--tol", "1e-12", "--max-iters", "3",
                       "--out", str(tmp_path / "s")])
        assert rc == cli.EXIT_NUMERICAL
        # partial results still land on disk for inspection
        assert (tmp_path / "s" / "values.raw").exists()
        assert "NOT converged" in capsys.readouterr().err

    def test_threads_flag_does_not_change_results(self, workspace, tmp_path):
        outs = []
        for threads, name in (("1", "t1"), ("4", "t4")):
            rc = cli.main(["solve", "--grid", str(workspace / "grid"),
                           "--scenario", str(workspace / "scenario.json"),
                           "--subsample", "0.25", "--threads", threads,
                           "--out", str(tmp_path / name)])
            assert rc == cli.EXIT_OK
            outs.append(tmp_path / name)
        for name in ("values.raw", "policy.raw", "qtable.raw"):
            assert sha(outs[0] / name) == sha(outs[1] / name)


class TestRollout:
    def test_constfrac_runs_without_solution(self, workspace, tmp_path):
        out = tmp_path / "r"
        rc = cli.main(["rollout", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--policy", "constfrac:0.75", "--n", "2", "--seed", "5",
                       "--timeout", "600000", "--out", str(out)])
        assert rc == cli.EXIT_OK
        for name in ("trajectories.csv", "outcomes.csv", "stats.json",
                     "run_manifest.json"):
            assert (out / name).exists()

    def test_mdp_policy_needs_solution(self, workspace, tmp_path, capsys):
        rc = cli.main(["rollout", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--policy", "mdp", "--n", "1", "--seed", "5",
                       "--out", str(tmp_path / "r")])
        assert rc == cli.EXIT_CONFIG
        assert "--solution" in capsys.readouterr().err

    def test_mdp_policy_with_solution(self, workspace, tmp_path):
        rc = cli.main(["rollout", "--grid", str(workspace / "grid"),
                       "--scenario", str(workspace / "scenario.json"),
                       "--solution", str(workspace / "sol"),
                       "--policy", "mdp", "--n", "2", "--seed", "5",
                       "--timeout", "600000", "--out", str(tmp_path / "r")])
        assert rc == cli.EXIT_OK

    def test_bad_policy_specs_exit_config(self, workspace, tmp_path):
        for spec in ("constfrac:1.5", "constfrac:0", "qmdp:1,2,3", "wander"):
            rc = cli.main(["rollout", "--grid", str(workspace / "grid"),
                           "--scenario", str(workspace / "scenario.json"),
                           "--solution", str(workspace / "sol"),
                           "--policy", spec, "--n", "1", "--seed", "5",
                           "--out", str(tmp_path / "r")])
            assert rc == cli.EXIT_CONFIG, spec

    def test_same_seed_byte_identical_trajectories(self, workspace, tmp_path):
        outs = []
        for threads, name in (("1", "a"), ("3", "b")):
            rc = cli.main(["rollout", "--grid", str(workspace / "grid"),
                           "--scenario", str(workspace / "scenario.json"),
                           "--solution", str(workspace / "sol"),
                           "--policy", "qmdp:1000,1000,3,16", "--n", "2",
                           "--seed", "5", "--timeout", "600000",
                           "--threads", threads, "--out", str(tmp_path / name)])
            assert rc == cli.EXIT_OK
            outs.append(tmp_path / name)
        assert sha(outs[0] / "trajectories.csv") == sha(outs[1] / "trajectories.csv")


class TestReport:
    def test_table_over_two_runs(self, workspace, tmp_path, capsys):
        dirs = []
        for policy, name in (("constfrac:0.75", "a"), ("uncontrolled", "b")):
            out = tmp_path / name
            cli.main(["rollout", "--grid", str(workspace / "grid"),
                      "--scenario", str(workspace / "scenario.json"),
                      "--policy", policy, "--n", "2", "--seed", "5",
                      "--timeout", "600000", "--out", str(out)])
            dirs.append(str(out))
        capsys.readouterr()
        table = tmp_path / "table.csv"
        rc = cli.main(["report", *dirs, "--out", str(table)])
        assert rc == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "policy,reached_pct,median_h,std_h"
        assert len(lines) == 3
        assert lines[1].startswith("constfrac:0.75,")
        assert lines[2].startswith("uncontrolled,")
        assert table.read_text().splitlines() == lines

    def test_missing_stats_exits_config(self, tmp_path, capsys):
        rc = cli.main(["report", str(tmp_path)])
        assert rc == cli.EXIT_CONFIG


class TestPolicySpecParsing:
    def test_qmdp_sigma_extraction(self, workspace):
        from icecav import solver
        from icecav.mdp import load_scenario, build_mdp
        from icecav import gridio
        grid = gridio.read_grid(str(workspace / "grid"))
        scen = load_scenario(str(workspace / "scenario.json"))
        mdp = build_mdp(grid, scen["config"], scen["terminals"])
        lat, _, policy, qt, _ = solver.load_solution(str(workspace / "sol"))
        spec, sigma = cli.parse_policy_spec("qmdp:800,900,2.5,32", mdp, lat, policy, qt)
        assert spec.name == "qmdp"
        assert sigma == (800.0, 900.0, 2.5)
        spec, sigma = cli.parse_policy_spec("uncontrolled", mdp, None, None, None)
        assert sigma == (0.0, 0.0, 0.0)
