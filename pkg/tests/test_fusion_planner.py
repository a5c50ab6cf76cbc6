import numpy as np
import pytest

from deskdrive.fusion import (FusionConfig, encode_measurements, fuse_all, fuse_perception, init_fusion,
                              measurement_inputs, one_hot)
from deskdrive.numerics import Tensor, add, dense, reduce_sum, rng_for
from deskdrive.planner import PlannerConfig, gru_cell, init_planner, rollout_waypoints, waypoint_head
from gradcheck import check_params


def fusion_params(cfg=FusionConfig(), seed=0):
    return init_fusion({}, rng_for(seed, "fusion"), cfg)


def test_one_hot():
    assert list(one_hot(2)) == [0, 0, 1, 0, 0, 0]
    assert list(one_hot("turn-left")) == [0, 0, 0, 1, 0, 0]
    with pytest.raises(ValueError):
        one_hot(6)


@pytest.mark.parametrize("n, width", [(100, 500), (16, 80)])
def test_detection_block_flattens_to_5n(n, width):
    cfg = FusionConfig(detections=n)
    assert cfg.block_width == width
    p = fusion_params(cfg)
    assert p["fusion.perc.w"].shape == (width + cfg.residual_width, cfg.width)
    out = fuse_perception(p, Tensor(np.ones((2, 64))), Tensor(np.zeros((2, n, 5))))
    assert out.shape == (2, cfg.width) and np.all(np.isfinite(out.data))


def test_measurements():
    p = fusion_params()
    m = encode_measurements(p, [0.0], ["straight"])
    assert m.shape == (1, 64) and np.all(np.isfinite(m.data))
    assert np.array_equal(measurement_inputs([3.0], [1])[0], [0, 1, 0, 0, 0, 0, 3.0])
    with pytest.raises(ValueError):
        encode_measurements(p, [-0.1], ["straight"])


def test_fuse_all_sum_stage_commutes():
    rng = np.random.default_rng(0)
    x = Tensor(rng.normal(size=(3, 64)))
    z = Tensor(np.zeros((3, 64)))
    assert np.array_equal(add(x, z).data, add(z, x).data)
    p = fusion_params()
    assert np.array_equal(fuse_all(p, x, z).data, fuse_all(p, z, x).data)
    assert fuse_all(p, x, z).shape == (3, 64)
    with pytest.raises(ValueError):
        fuse_all(p, x, Tensor(np.zeros((3, 32))))


def test_fusion_gradient_reaches_both_branches():
    p = fusion_params()
    rng = np.random.default_rng(1)
    pooled, block = Tensor(rng.normal(size=(1, 64))), Tensor(rng.uniform(size=(1, 16, 5)))

    def loss(ps):
        return reduce_sum(fuse_all(ps, fuse_perception(ps, pooled, block), encode_measurements(ps, [2.0], [0])))

    from deskdrive.numerics import Tape, backward
    with Tape() as t:
        L = loss(p)
    g = backward(t, L).for_params(p)
    assert np.abs(g["fusion.perc.w"]).sum() > 0 and np.abs(g["fusion.meas.w"]).sum() > 0
    assert check_params(loss, p, rng) < 1e-4


# planner

def test_gru_zero_weights_example():
    p = {f"g.{k}.{s}": Tensor(np.zeros((3, 2)) if s == "w" else np.zeros(2))
         for k in ("z", "r", "h") for s in ("w", "b")}
    out = gru_cell(p, Tensor([[1.0, 1.0]]), Tensor([[0.5]]), prefix="g")
    assert np.array_equal(out.data, [[0.5, 0.5]])


def test_gru_saturated_update_gate_keeps_state():
    p = {f"g.{k}.{s}": Tensor(np.zeros((3, 2)) if s == "w" else np.zeros(2))
         for k in ("r", "h") for s in ("w", "b")}
    p["g.z.w"] = Tensor(np.zeros((3, 2)))
    p["g.z.b"] = Tensor(np.full(2, 60.0))
    h = Tensor([[0.3, -0.7]])
    out = gru_cell(p, h, Tensor([[0.0]]), prefix="g")
    assert np.allclose(out.data, h.data, atol=1e-15)


def test_gru_width_mismatch_rejected():
    p = init_planner({}, rng_for(0, "p"), PlannerConfig())
    with pytest.raises(ValueError):
        gru_cell(p, Tensor(np.zeros((1, 64))), Tensor(np.zeros((1, 10))))


def test_gru_gradient():
    p = init_planner({}, rng_for(0, "p"), PlannerConfig(input_width=6, hidden=5))
    gru = {k: v for k, v in p.items() if ".gru." in k}
    rng = np.random.default_rng(2)
    h, x = Tensor(rng.normal(size=(1, 5))), Tensor(rng.normal(size=(1, 8)))
    assert check_params(lambda ps: reduce_sum(gru_cell(ps, h, x)), gru, rng, coords_per_param=4) < 1e-4


def test_rollout_shapes_and_zero_head():
    cfg = PlannerConfig()
    p = init_planner({}, rng_for(0, "p"), cfg)
    fused = Tensor(np.random.default_rng(0).normal(size=(2, 64)))
    out = rollout_waypoints(p, fused, np.array([[10.0, 1.0], [5.0, -2.0]]), cfg)
    assert out.shape == (2, 4, 2)
    again = rollout_waypoints(p, fused, np.array([[10.0, 1.0], [5.0, -2.0]]), cfg)
    assert np.array_equal(out.data, again.data)
    p["planner.head.w"] = Tensor(np.zeros((64, 2)))
    p["planner.head.b"] = Tensor(np.zeros(2))
    assert np.all(rollout_waypoints(p, fused, np.zeros((2, 2)), cfg).data == 0.0)


def test_planner_needs_two_waypoints():
    with pytest.raises(ValueError):
        PlannerConfig(waypoints=1)


def test_head_is_affine():
    p = init_planner({}, rng_for(0, "p"), PlannerConfig())
    rng = np.random.default_rng(4)
    for _ in range(20):
        h1, h2 = rng.normal(size=(1, 64)), rng.normal(size=(1, 64))
        lhs = waypoint_head(p, Tensor(h1 + h2)).data - waypoint_head(p, Tensor(h2)).data
        rhs = waypoint_head(p, Tensor(h1)).data - waypoint_head(p, Tensor(np.zeros((1, 64)))).data
        assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_initial_hidden_is_bias_only():
    from deskdrive.planner import initial_hidden
    p = init_planner({}, rng_for(0, "p"), PlannerConfig())
    assert np.array_equal(initial_hidden(p, 3).data, np.tile(p["planner.h0.b"].data, (3, 1)))
