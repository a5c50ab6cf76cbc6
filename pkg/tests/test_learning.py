import hashlib

import numpy as np
import pytest

from deskdrive.control import ControlAction
from deskdrive.learning import (Dataset, FeatureCache, PolicyConfig, SampleRecord, TrainConfig, collect_episode,
                                dagger_round, detection_block, expert_collect, init_policy, mix_half_and_half,
                                policy_forward, train_offline, waypoint_loss)
from deskdrive.numerics import Tape, backward
from deskdrive.perception import DetectorConfig, TransformerConfig, init_classifier, init_detector
from deskdrive.simworld import Expert, Rig, ScenarioSpec, SimConfig

SMALL = DetectorConfig(transformer=TransformerConfig(queries=4))
CFG = PolicyConfig(detector=SMALL)


@pytest.fixture(scope="module")
def perception():
    return init_detector(SMALL, 0)


@pytest.fixture(scope="module")
def follow_data():
    return collect_episode(Expert(), ScenarioSpec("follow", 0)).records[:12]


def record(i=0, provenance="offline-0"):
    rng = np.random.default_rng(i)
    return SampleRecord(rng.integers(0, 256, size=(3, 64, 64), dtype=np.uint8), float(i % 5), "follow-lane",
                        (10.0, 0.5 * i), rng.normal(size=(4, 2)), ControlAction(0.1, 0.2), provenance)


def checksum(params):
    h = hashlib.sha256()
    for k in sorted(params):
        h.update(k.encode())
        h.update(params[k].data.tobytes())
    return h.hexdigest()


# loss

def test_waypoint_loss_examples():
    assert waypoint_loss(np.zeros((4, 2)), np.zeros((4, 2))).item() == 0.0
    assert waypoint_loss(np.ones((1, 4, 2)), np.zeros((1, 4, 2))).item() == 8.0
    assert waypoint_loss(np.ones((2, 4, 2)), np.zeros((2, 4, 2))).item() == 8.0
    with pytest.raises(ValueError):
        waypoint_loss(np.zeros((3, 2)), np.zeros((4, 2)))


def test_waypoint_loss_gradient_is_sign():
    from deskdrive.numerics import Tensor
    pred = Tensor(np.array([[[1.0, -2.0], [0.5, 3.0]]]))
    with Tape() as t:
        loss = waypoint_loss(pred, np.zeros((1, 2, 2)))
    g = backward(t, loss)[pred]
    assert np.array_equal(g, np.sign(pred.data))


# records and dataset

def test_collection_samples_at_two_hertz(follow_data):
    col = collect_episode(Expert(), ScenarioSpec("follow", 0))
    assert col.outcome == "completed" and not col.flagged
    # 2 Hz sampling over the first 10 s gives 20 records
    times = np.arange(len(col.records)) * 0.5
    assert np.sum(times < 10.0) == 20
    r = col.records[0]
    assert r.image.dtype == np.uint8 and r.image.shape == (3, 64, 64)
    assert r.expert_waypoints.shape == (4, 2)
    assert follow_data[0].provenance == "offline-0"


def test_bad_sample_rate_rejected():
    with pytest.raises(ValueError):
        collect_episode(Expert(), ScenarioSpec("follow", 0), sample_rate=3.0)


def test_record_validation():
    with pytest.raises(ValueError):
        SampleRecord(np.zeros((3, 64, 64), np.uint8), 1.0, "fly", (0, 0), np.zeros((4, 2)), ControlAction(0, 0))
    with pytest.raises(ValueError):
        SampleRecord(np.zeros((3, 64, 64), np.uint8), -1.0, "follow-lane", (0, 0), np.zeros((4, 2)),
                     ControlAction(0, 0))


def test_dataset_round_trip(tmp_path):
    ds = Dataset([record(i, "dagger-1" if i % 2 else "offline-0") for i in range(7)], seed=5)
    ds.save(tmp_path / "d")
    back = Dataset.load(tmp_path / "d")
    assert back.seed == 5 and len(back) == 7
    for a, b in zip(ds, back):
        assert np.array_equal(a.image, b.image) and np.array_equal(a.expert_waypoints, b.expert_waypoints)
        assert (a.speed, a.command, a.goal, a.expert_action, a.provenance) == \
               (b.speed, b.command, b.goal, b.expert_action, b.provenance)


def test_dataset_rejects_unknown_format(tmp_path):
    Dataset([record()]).save(tmp_path / "d")
    m = tmp_path / "d" / "manifest.json"
    m.write_text(m.read_text().replace('"format": 1', '"format": 99'))
    with pytest.raises(ValueError):
        Dataset.load(tmp_path / "d")


def test_mix_half_and_half_counts():
    old = Dataset([record(i, "offline-0") for i in range(300)])
    new = Dataset([record(i, "dagger-1") for i in range(100)])
    mixed = mix_half_and_half(old, new, 0, 1)
    assert len(mixed) == 200
    prov = [r.provenance for r in mixed]
    assert prov.count("offline-0") == prov.count("dagger-1") == 100
    again = mix_half_and_half(old, new, 0, 1)
    assert [id(r) for r in mixed] == [id(r) for r in again]


def test_detection_block_zeroes_empty_slots():
    probs = np.array([[[0.9, 0.1, 0, 0, 0], [0.1, 0.0, 0.9, 0, 0]]])
    boxes = np.array([[[0.5, 0.5, 0.2, 0.2], [0.3, 0.4, 0.1, 0.1]]])
    assert np.array_equal(detection_block(probs, boxes)[0], [[0, 0, 0, 0, 0], [0.5, 0.3, 0.4, 0.1, 0.1]])


# training

def test_zero_learning_rate_keeps_parameters(follow_data, perception):
    ds = Dataset(list(follow_data))
    params = init_policy(CFG, 0)
    out, _ = train_offline(params, CFG, ds, FeatureCache(CFG, perception), TrainConfig(epochs=1, lr=0.0, batch=4))
    assert checksum(out) == checksum(params)


def test_training_is_deterministic_and_reduces_loss(follow_data, perception):
    ds = Dataset(list(follow_data))
    cache = FeatureCache(CFG, perception)
    tc = TrainConfig(epochs=15, lr=3e-3, batch=4)
    a, curve = train_offline(init_policy(CFG, 0), CFG, ds, cache, tc, seed=2)
    b, _ = train_offline(init_policy(CFG, 0), CFG, ds, cache, tc, seed=2)
    assert checksum(a) == checksum(b)
    assert curve[-1] < 0.5 * curve[0]


def test_training_leaves_perception_untouched(follow_data, perception):
    before = checksum(perception)
    train_offline(init_policy(CFG, 1), CFG, Dataset(list(follow_data)), FeatureCache(CFG, perception),
                  TrainConfig(epochs=1, batch=6))
    assert checksum(perception) == before


def test_empty_dataset_rejected(perception):
    with pytest.raises(ValueError):
        train_offline(init_policy(CFG, 0), CFG, Dataset(), FeatureCache(CFG, perception), TrainConfig(epochs=1))


def test_classifier_arm_forward():
    cfg = PolicyConfig(arm="classifier", detector=SMALL)
    params = init_policy(cfg, 0)
    assert params["fusion.perc.w"].shape[0] == 5 + cfg.residual_width
    from deskdrive.learning import perceive
    pooled, block = perceive(cfg, init_classifier(SMALL, 0), np.zeros((2, 3, 64, 64)))
    out = policy_forward(params, cfg, pooled, block, [0.0, 1.0], ["follow-lane"] * 2, np.zeros((2, 2)))
    assert out.shape == (2, 4, 2)
    with pytest.raises(ValueError):
        PolicyConfig(arm="lidar")


def test_dagger_round_labels_student_states(perception, follow_data):
    old = Dataset(list(follow_data))
    cache = FeatureCache(CFG, perception)
    params = init_policy(CFG, 0)
    spec = ScenarioSpec("follow", 3)
    rig = Rig(sim=SimConfig(blocked_time=8.0))
    mixed, new_params, rep = dagger_round(params, CFG, perception, [spec], old, cache,
                                          TrainConfig(epochs=1, batch=8), round_id=1, rig=rig)
    assert rep.new_records > 0 and rep.mixed_records == len(mixed) == 2 * min(len(old), rep.new_records)
    assert {r.provenance for r in mixed} == {"offline-0", "dagger-1"}
    assert checksum(new_params) != checksum(params)
    # labels on student-visited states come from the expert, so they are reproducible
    again, _, _ = dagger_round(params, CFG, perception, [spec], old, cache, TrainConfig(epochs=1, batch=8), 1,
                               rig=rig)
    for a, b in zip(mixed, again):
        assert np.array_equal(a.expert_waypoints, b.expert_waypoints)


def test_expert_collect_provenance():
    ds = expert_collect([ScenarioSpec("lead-vehicle-stop", 0)], provenance="offline-7")
    assert len(ds) > 0 and {r.provenance for r in ds} == {"offline-7"}


def test_learning_rate_schedules():
    assert TrainConfig(epochs=10, lr=0.1).lr_at(7) == 0.1
    cos = TrainConfig(epochs=4, lr=0.1, schedule="cosine")
    assert [cos.lr_at(e) for e in range(4)] == pytest.approx([0.1, 0.1 * (1 + 2 ** -0.5) / 2, 0.05,
                                                              0.1 * (1 - 2 ** -0.5) / 2], abs=1e-15)
    with pytest.raises(ValueError):
        TrainConfig(schedule="step")
