import json

import pytest

from deskdrive.bench import read_table
from deskdrive.cli import main
from deskdrive.config import ConfigError, RunConfig, parse_seeds

TINY = """
[run]
seed = 0
[model]
detections = 4
[pretrain]
steps = 3
classifier_steps = 3
kinds = follow
seeds = 0
heldout_seeds = 9
frame_every = 4.0
batch = 4
[train]
epochs = 2
batch = 16
kinds = follow
seeds = 0
heldout_kinds = follow
heldout_seeds = 9
[dagger]
rounds = 1
kinds = follow
seeds_per_round = 1
[bench]
kinds = follow
seeds = 0
ablate_kinds = follow
ablate_seeds = 0
[sim]
blocked_time = 8.0
"""


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY)
    return cfg, root / "out"


def run(*argv):
    return main([str(a) for a in argv])


def manifest(out, command):
    return json.loads((out / "manifests" / f"{command}.json").read_text())


# config

def test_presets_load_and_round_trip():
    for name in ("desk", "full"):
        cfg = RunConfig.load(name)
        assert RunConfig.parse(cfg.to_ini()) == cfg
    assert RunConfig.load("full").model.detections == 100
    assert RunConfig.load("full").policy().fusion.block_width == 500


@pytest.mark.parametrize("text, field", [
    ("[train]\nepochs = 0\n", "train.epochs"),
    ("[train]\nepoch = 3\n", "epoch"),
    ("[model]\nimage_size = 100\n", "model.image_size"),
    ("[model]\nd_model = 30\n", "model.d_model"),
    ("[control]\nmax_throttle = 1.5\n", "control.max_throttle"),
    ("[sim]\ndt = inf\n", "sim.dt"),
    ("[train]\nschedule = step\n", "train.schedule"),
    ("[bench]\nseeds = 5-2\n", "bench.seeds"),
    ("[nope]\n", "nope"),
])
def test_bad_config_names_the_field(text, field):
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        RunConfig.parse(text)


def test_seed_lists():
    assert parse_seeds("0-2,7") == (0, 1, 2, 7)
    with pytest.raises(ValueError):
        parse_seeds("")


def test_overrides_are_validated():
    cfg = RunConfig().override({"dagger.rounds": "5"})
    assert cfg.dagger.rounds == 5
    with pytest.raises(ConfigError):
        RunConfig().override({"dagger.rounds": "-1"})
    with pytest.raises(ConfigError):
        RunConfig().override({"rounds": "1"})


# exit codes

def test_unknown_command_prints_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        run("fly")
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_bad_config_exits_1(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[train]\nbatch = -4\n")
    assert run("collect", "--config", bad, "--out", tmp_path / "o") == 1
    assert "train.batch" in capsys.readouterr().err
    assert run("bench", "--config", tmp_path / "missing.cfg", "--out", tmp_path / "o") == 1


def test_missing_checkpoint_exits_1(tiny, tmp_path, capsys):
    cfg, _ = tiny
    assert run("bench", "--agent", "detection", "--config", cfg, "--out", tmp_path / "empty") == 1
    assert "train --arm detection" in capsys.readouterr().err
    assert run("train", "--config", cfg, "--out", tmp_path / "empty") == 1
    assert "pretrain-detector" in capsys.readouterr().err


def test_runtime_failure_exits_2(tiny, tmp_path):
    cfg, _ = tiny
    out = tmp_path / "broken"
    (out / "perception").mkdir(parents=True)
    from deskdrive.numerics import Tensor, save_checkpoint
    save_checkpoint(out / "perception" / "detector.ckpt", {"x": Tensor([1.0])})
    (out / "data" / "offline").mkdir(parents=True)
    (out / "data" / "offline" / "manifest.json").write_text("{not json")
    (out / "data" / "heldout").mkdir(parents=True)
    assert run("train", "--config", cfg, "--out", out) == 2


# commands

def test_expert_bench_is_clean(tiny, tmp_path):
    cfg, _ = tiny
    out = tmp_path / "b"
    assert run("bench", "--config", cfg, "--out", out, "--suite", "follow,pedestrian-crossing") == 0
    rows = read_table(out / "bench" / "expert" / "metrics.csv")
    assert [r["Route"] for r in rows] == ["follow-0", "pedestrian-crossing-0", "aggregate"]
    assert all(r[c] == 0.0 for r in rows for c in rows[0] if c.startswith("Collisions"))
    m = manifest(out, "bench")
    assert m["summary"]["collisions"] == 0
    assert "bench/expert/metrics.csv" in m["artifacts"] and len(m["artifacts"]["bench/expert/metrics.csv"]) == 64


def test_output_root_from_environment(tiny, tmp_path, monkeypatch):
    cfg, _ = tiny
    monkeypatch.setenv("DESKDRIVE_OUT", str(tmp_path / "env"))
    assert run("collect", "--config", cfg) == 0
    assert (tmp_path / "env" / "data" / "offline" / "manifest.json").exists()


def test_pipeline(tiny):
    cfg, out = tiny
    assert run("pretrain-detector", "--config", cfg, "--out", out) == 0
    assert (out / "perception" / "detector.ckpt").exists() and (out / "perception" / "classifier.ckpt").exists()
    assert run("collect", "--config", cfg, "--out", out) == 0

    assert run("train", "--config", cfg, "--out", out) == 0
    first = manifest(out, "train")["artifacts"]["policy/detection-offline.ckpt"]
    assert run("train", "--config", cfg, "--out", out) == 0
    assert manifest(out, "train")["artifacts"]["policy/detection-offline.ckpt"] == first
    assert run("train", "--config", cfg, "--out", out, "--seed", "1") == 0
    assert manifest(out, "train")["artifacts"]["policy/detection-offline.ckpt"] != first
    assert manifest(out, "train")["seed"] == 1
    assert run("train", "--config", cfg, "--out", out) == 0

    assert run("dagger", "--config", cfg, "--out", out, "--rounds", "1") == 0
    hist = manifest(out, "dagger")["summary"]["history"]
    assert [h["round"] for h in hist] == [0, 1]

    assert run("bench", "--config", cfg, "--out", out, "--agent", "detection") == 0
    assert (out / "bench" / "detection" / "plots" / "follow-0.svg").exists()

    assert run("train", "--config", cfg, "--out", out, "--arm", "classifier") == 0
    assert run("ablate", "--config", cfg, "--out", out) == 0
    text = (out / "ablate" / "paired.csv").read_text()
    assert text.startswith("Route,Detection collisions") and "follow-0" in text

    assert run("plot", "--config", cfg, "--out", out, "--agent", "detection") == 0
    assert (out / "plots" / "detection" / "follow-0.svg").exists()
    for command in ("pretrain-detector", "collect", "train", "dagger", "bench", "ablate", "plot"):
        m = manifest(out, command)
        assert m["config_ini"] and m["artifacts"]
        assert RunConfig.parse(m["config_ini"]).run.seed == m["seed"]


def test_dagger_runs_the_configured_number_of_rounds(tiny, monkeypatch):
    # relies on the checkpoints test_pipeline left behind; the round itself is stubbed out
    cfg, out = tiny
    from deskdrive import cli
    from deskdrive.learning.train import RoundReport
    seen = []

    def fake_round(params, pcfg, perception, specs, old, cache, train, round_id, seed, rig):
        seen.append((round_id, specs[0].seed))
        return old, params, RoundReport(round_id, 1, 2, 100.0)

    monkeypatch.setattr(cli, "dagger_round", fake_round)
    assert RunConfig.load("full").dagger.rounds == 12
    assert run("dagger", "--config", cfg, "--out", out, "--set", "dagger.rounds=12") == 0
    assert [r for r, _ in seen] == list(range(1, 13))
    # each round drives fresh seeds
    assert len({s for _, s in seen}) == 12
    assert len(list((out / "policy").glob("detection-dagger-*.ckpt"))) == 12
