import filecmp
import json
import shutil
from pathlib import Path

import pytest

from platoonmine import cli
from platoonmine.geo import geo_distance
from platoonmine.matching import MatchedPoint
from platoonmine.network import ALONG
from platoonmine.pipeline import PipelineError, load_config, run_pipeline
from platoonmine.pipeline.config import config_from_dict, default_config_text
from platoonmine.pipeline.resample import resample
from platoonmine.pipeline.stages import FILES
from platoonmine.synth import PlatoonPlan, ScenarioSpec, generate, write_scenario


def mp(graph, seg, r, t, tid="t", alt=100.0):
    return MatchedPoint(tid, t, seg, r, ALONG, graph.interpolate(seg, r), alt)


# ------------------------------------------------------------------ resample
def test_on_grid_unchanged(line3):
    pts = [mp(line3, "s1", r, 15.0 * k) for k, r in enumerate([0.1, 0.4, 0.7])]
    out = resample(pts, line3)
    assert [(g.timestep, g.segment_id, g.r) for g in out] == [(k, "s1", p.r) for k, p in enumerate(pts)]


def test_ten_second_sampling(line3):
    # 20 m/s: fixes every 10 s are 200 m apart, crossing from s1 into s2
    pts = [mp(line3, "s1" if x < 1000 else "s2", (x % 1000) / 1000, t)
           for t, x in ((0, 700), (10, 900), (20, 1100), (30, 1300))]
    out = {g.timestep: g for g in resample(pts, line3)}
    assert sorted(out) == [0, 1, 2]
    g1 = out[1]  # t = 15 s, halfway between the fixes at 900 m and 1100 m
    assert (g1.segment_id, g1.r) == ("s2", pytest.approx(0.0, abs=1e-6)) or (
        g1.segment_id == "s1" and g1.r == pytest.approx(1.0, abs=1e-6))
    assert geo_distance(g1.lonlat, line3.interpolate("s2", 0.0)) < 0.5
    assert g1.odo_m == pytest.approx(300.0, abs=0.5)
    assert out[2].odo_m == pytest.approx(600.0, abs=0.5)


def test_long_gap_inactive(line3):
    pts = [mp(line3, "s1", 0.0, 0.0), mp(line3, "s1", 0.1, 15.0), mp(line3, "s3", 0.1, 105.0)]
    out = resample(pts, line3)
    assert [g.timestep for g in out] == [0, 1, 7]


def test_altitude_interpolated(line3):
    pts = [mp(line3, "s1", 0.1, 0.0, alt=100.0), mp(line3, "s1", 0.7, 30.0, alt=106.0)]
    out = resample(pts, line3)
    assert out[1].altitude_m == pytest.approx(103.0)


# -------------------------------------------------------------------- config
def test_default_config_values_are_tagged():
    for line in default_config_text().splitlines():
        if "=" in line and not line.lstrip().startswith("#") and not line.startswith(("network", "trajectories")):
            assert "[source" in line or "[chosen]" in line, line


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        config_from_dict({"grid": {"dt_s": 15.0, "staleness_s": 10.0}})
    with pytest.raises(ValueError, match="unknown"):
        config_from_dict({"clustering": {"epsilon": 2}})
    with pytest.raises(ValueError):
        config_from_dict({"fuel": {"dt_s": 10.0}})
    f = tmp_path / "c.toml"
    f.write_text('[input]\nnetwork = "net"\n[mining]\nmin_t = 3\n')
    cfg = load_config(f)
    assert cfg.mining.min_t == 3 and cfg.clustering.eps_km == 1.0
    assert Path(cfg.network) == (tmp_path / "net").resolve()


def test_digest_ignores_inputs():
    a = config_from_dict({"input": {"network": "x"}})
    b = config_from_dict({"input": {"network": "y"}})
    c = config_from_dict({"mining": {"min_t": 4}})
    assert a.digest() == b.digest() != c.digest()


# ----------------------------------------------------------------- end to end
@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    root = tmp_path_factory.mktemp("scen")
    sc = generate(ScenarioSpec(seed=21, template="junction", template_args={"arm_segments": 8}, n_timesteps=70,
                               platoons=[PlatoonPlan(3, 3, 40, corridor="west_to_east"),
                                         PlatoonPlan(2, 20, 60, headway_m=350.0, corridor="west_to_north")],
                               n_solo=4, grade=0.02))
    write_scenario(sc, root)
    return sc, root


def truth_pairs(sc):
    return sorted((tuple(sorted(t)), s) for t, s in sc.truth.patterns)


def read_pairs(out):
    steps = {}
    for line in (out / "pattern_steps.csv").read_text().splitlines()[1:]:
        pid, t = map(int, line.split(","))
        steps.setdefault(pid, []).append(t)
    pairs = []
    for line in (out / "patterns.csv").read_text().splitlines()[1:]:
        row = line.split(",")
        pairs.append((tuple(sorted(row[1].split())), tuple(steps[int(row[0])])))
    return sorted(pairs)


def run(root, out, threads=1):
    cfg = load_config()
    return run_pipeline(cfg, out, threads, root / "network", root / "trajectories.csv")


def test_recovers_planted(scenario, tmp_path):
    sc, root = scenario
    out = run(root, tmp_path / "out")
    assert read_pairs(out) == truth_pairs(sc)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["counts"]["n_patterns"] == 2
    assert set(FILES.values()) <= {p.name for p in out.iterdir()}
    head = json.loads((out / "headline.json").read_text())
    for key in ("share_trucks_platooning", "pdr", "ptr", "share_patterns_coordinable", "fleet_fuel_saving_pct"):
        assert key in head


def test_rerun_identical_and_thread_independent(scenario, tmp_path):
    _, root = scenario
    a = run(root, tmp_path / "a")
    b = run(root, tmp_path / "b")
    c = run(root, tmp_path / "c", threads=2)
    for name in FILES.values():
        assert filecmp.cmp(a / name, b / name, shallow=False), name
        assert filecmp.cmp(a / name, c / name, shallow=False), name


def test_stages_compose(scenario, tmp_path):
    _, root = scenario
    full = run(root, tmp_path / "full")
    out = tmp_path / "steps"
    net, traj = str(root / "network"), str(root / "trajectories.csv")
    for cmd in (["match", "--network", net, "--trajectories", traj], ["resample", "--network", net],
                ["cluster", "--network", net], ["mine", "--network", net], ["fuel"], ["report", "--network", net]):
        assert cli.main(["--out", str(out)] + cmd) == 0
    for name in FILES.values():
        assert filecmp.cmp(full / name, out / name, shallow=False), name


def test_empty_input(tmp_path, scenario):
    _, root = scenario
    (tmp_path / "empty.csv").write_text("truck_id,timestamp,lon,lat,altitude_m\n")
    out = run_pipeline(load_config(), tmp_path / "out", 1, root / "network", tmp_path / "empty.csv")
    counts = json.loads((out / "manifest.json").read_text())["counts"]
    assert counts and all(v == 0 for v in counts.values())
    assert (out / "patterns.csv").read_text().count("\n") == 1


def test_failure_leaves_nothing(tmp_path, scenario):
    _, root = scenario
    (tmp_path / "bad.csv").write_text("truck_id,timestamp,lon,lat,altitude_m\n1,zero,116,40,0\n")
    with pytest.raises(PipelineError) as err:
        run_pipeline(load_config(), tmp_path / "out", 1, root / "network", tmp_path / "bad.csv")
    assert err.value.stage == "match"
    assert list(tmp_path.iterdir()) == [tmp_path / "bad.csv"]


def test_grade_reaches_fuel_profile(scenario, tmp_path):
    import math
    from platoonmine.pipeline.resample import read_grid
    from platoonmine.pipeline.stages import _profiles
    _, root = scenario
    out = run(root, tmp_path / "o")
    profiles = _profiles(read_grid(out / "grid.csv"), 15.0)
    inner = [a for p in profiles.values() for a in p.alpha[1:-1]]
    assert inner and all(a == pytest.approx(math.atan(0.02), abs=2e-3) for a in inner)


# ----------------------------------------------------------------------- cli
def test_cli_synth_and_fd(tmp_path, capsys):
    (tmp_path / "s.toml").write_text('[scenario]\nseed = 2\ntemplate = "line"\nn_timesteps = 20\nn_solo = 2\n')
    assert cli.main(["--out", str(tmp_path / "sc"), "synth", str(tmp_path / "s.toml")]) == 0
    assert (tmp_path / "sc" / "truth.json").exists()
    capsys.readouterr()
    assert cli.main(["fd", "--network", str(tmp_path / "sc" / "network"), "s1,0.2,0", "s1,0.7,0"]) == 0
    assert json.loads(capsys.readouterr().out)["fd_m"] == pytest.approx(1000.0, abs=1)


def test_cli_reports_stage_error(tmp_path, scenario, capsys):
    _, root = scenario
    (tmp_path / "bad.csv").write_text("nope\n")
    code = cli.main(["--out", str(tmp_path / "o"), "run", "--network", str(root / "network"),
                     "--trajectories", str(tmp_path / "bad.csv")])
    assert code == 1
    assert "stage 'match' failed" in capsys.readouterr().err


def test_max_headway_rule_runs(scenario, tmp_path):
    _, root = scenario
    (tmp_path / "c.toml").write_text('[fuel]\nheadway_stat = "max"\n')
    out = run_pipeline(load_config(tmp_path / "c.toml"), tmp_path / "o", 1, root / "network",
                       root / "trajectories.csv")
    rows = (out / "savings.csv").read_text().splitlines()[1:]
    assert len(rows) == 2
