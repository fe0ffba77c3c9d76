import numpy as np
import pytest

from nrv.losses import (
    LossConfig,
    adversarial_loss,
    compose_tile_loss,
    cycle_loss,
    density_multiplier,
    extended_cycle_loss,
    hallucination_loss,
    tile_objective,
)
from nrv.phantom import DegenerationParams, degenerate, rasterize_tubes, TubeSpec
from nrv.volume import Kind, Provenance, Volume3D

CFG = LossConfig()


def vol(values, dims=None):
    arr = np.asarray(values, dtype=np.float32)
    if dims is not None:
        arr = arr.reshape(dims)
    elif arr.ndim == 1:
        arr = arr.reshape((arr.size, 1, 1))
    return Volume3D(arr, (1.0, 1.0, 1.0), Kind.NORMALIZED, Provenance.REAL)


def rand_pair(rng, dims=(16, 16, 16)):
    return (vol(rng.random(dims, dtype=np.float32), dims),
            vol(rng.random(dims, dtype=np.float32), dims))


# naive per-voxel reference loops, deliberately list-based

def delta_oracle(a, b, t):
    xs = a.data.ravel().tolist()
    ys = b.data.ravel().tolist()
    shared = 0
    for x, y in zip(xs, ys):
        if x <= t and y <= t:
            shared += 1
    return 1.0 / max(1, len(xs) - shared)


def l1_oracle(a, b):
    return sum(abs(float(y) - float(x))
               for x, y in zip(a.data.ravel().tolist(), b.data.ravel().tolist()))


def clipped_excess_oracle(hi, lo):
    total = 0.0
    for h, l in zip(hi.data.ravel().tolist(), lo.data.ravel().tolist()):
        d = h - l
        if d < 0.0:
            d = 0.0
        elif d > 1.0:
            d = 1.0
        total += d
    return total


def test_delta_hand_examples():
    assert density_multiplier(vol([0.9] * 8), vol([0.9] * 8), CFG) == 1.0 / 8
    a = vol([0.9, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    b = vol([0.9, 0.0, 0.9, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert density_multiplier(a, b, CFG) == 1.0 / 3
    z = vol([0.0] * 8)
    assert density_multiplier(z, z, CFG) == 1.0
    assert cycle_loss(z, z, CFG) == 0.0


def test_delta_symmetric_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rand_pair(rng, (6, 5, 4))
        d1 = density_multiplier(a, b, CFG)
        d2 = density_multiplier(b, a, CFG)
        assert d1 == d2
        assert 0.0 < d1 <= 1.0


def test_cycle_hand_example():
    a = vol([0.8, 0.0])
    b = vol([0.6, 0.0])
    assert cycle_loss(a, b, CFG) == pytest.approx(0.2, rel=1e-6)


def test_cycle_identity_zero():
    rng = np.random.default_rng(1)
    a, _ = rand_pair(rng)
    assert cycle_loss(a, a, CFG) == 0.0


def test_cycle_matches_naive_loop():
    rng = np.random.default_rng(2)
    for _ in range(25):
        a, b = rand_pair(rng)
        expected = delta_oracle(a, b, CFG.fg_threshold) * l1_oracle(a, b)
        got = cycle_loss(a, b, CFG)
        assert got == pytest.approx(expected, rel=1e-6)


def test_hallucination_hand_example():
    v_y = vol([0.8, 0.0])
    v_gy = vol([0.9, 0.6])
    zeros = vol([0.0, 0.0])
    # old-side pair identical, so only the young-side term contributes
    got = hallucination_loss(zeros, zeros, v_y, v_gy, CFG)
    assert got == pytest.approx(3.5, rel=1e-6)


def test_hallucination_zero_on_equal_pairs():
    rng = np.random.default_rng(3)
    a, b = rand_pair(rng)
    assert hallucination_loss(a, a, b, b, CFG) == 0.0


def test_hallucination_matches_naive_loop():
    rng = np.random.default_rng(4)
    for _ in range(25):
        v_o, v_fo = rand_pair(rng)
        v_y, v_gy = rand_pair(rng)
        expected = (CFG.lambda_o * delta_oracle(v_fo, v_o, CFG.fg_threshold)
                    * clipped_excess_oracle(v_o, v_fo)
                    + CFG.lambda_y * delta_oracle(v_gy, v_y, CFG.fg_threshold)
                    * clipped_excess_oracle(v_gy, v_y))
        got = hallucination_loss(v_o, v_fo, v_y, v_gy, CFG)
        assert got == pytest.approx(expected, rel=1e-6)


def test_hallucination_zero_under_containment():
    specs = [TubeSpec(((4, 24, 24), (44, 24, 24)), (3.0, 3.0))]
    young = rasterize_tubes(specs, (48, 48, 48), (1.0, 1.0, 1.0))
    old = degenerate(young, specs, DegenerationParams(0.4, 10.0, 0.5, seed=2))
    # translated-young == old (contained in young), predicted-old == young
    assert hallucination_loss(old, young, young, old, CFG) == 0.0


def test_extended_cycle_matches_naive_loop():
    rng = np.random.default_rng(5)
    for _ in range(25):
        a, b = rand_pair(rng)
        expected = delta_oracle(a, b, CFG.fg_threshold) * l1_oracle(a, b)
        assert extended_cycle_loss(a, b, CFG) == pytest.approx(expected, rel=1e-6)
    a, _ = rand_pair(rng)
    assert extended_cycle_loss(a, a, CFG) == 0.0


def test_extended_cycle_linear_in_difference():
    # binary-exact values so the doubling is exact in float32
    base = np.full((8, 8, 8), 0.25, dtype=np.float32)
    bump = np.zeros((8, 8, 8), dtype=np.float32)
    bump[2:4, 2:4, 2:4] = 0.125
    a = vol(base, (8, 8, 8))
    b1 = vol(base + bump, (8, 8, 8))
    b2 = vol(base + 2 * bump, (8, 8, 8))
    l1 = extended_cycle_loss(a, b1, CFG)
    l2 = extended_cycle_loss(a, b2, CFG)
    assert l2 == pytest.approx(2 * l1, rel=1e-9)


def test_adversarial_loss():
    loss_d, loss_g = adversarial_loss([1.0, 1.0], [0.0, 0.0])
    assert loss_d == 0.0
    assert loss_g == 1.0
    _, loss_g = adversarial_loss([0.5], [1.0, 1.0, 1.0])
    assert loss_g == 0.0
    rng = np.random.default_rng(6)
    real = rng.normal(size=9)
    fake = rng.normal(size=7)
    loss_d, loss_g = adversarial_loss(real, fake)
    assert loss_d == pytest.approx(
        np.mean((real - 1) ** 2) + np.mean(fake ** 2), abs=1e-9)
    assert loss_g == pytest.approx(np.mean((fake - 1) ** 2), abs=1e-9)
    with pytest.raises(ValueError, match="non-empty"):
        adversarial_loss([], [1.0])


def test_compose_tile_loss_weights():
    part = compose_tile_loss(0.3, 0.4, 0.05, 0.02, 0.7, CFG)
    assert part.total == pytest.approx(0.3 + 0.4 + 10 * 0.05 + 0.7 + 10 * 0.02,
                                       abs=1e-12)


def test_tile_objective_hand_examples():
    ones = [compose_tile_loss(0, 0, 0, 0, 1.0, LossConfig(Lambda_O=0, Lambda_Y=0))
            for _ in range(5)]
    assert tile_objective(ones[:4], ones[4], CFG) == pytest.approx(1.5, abs=1e-12)

    zero = compose_tile_loss(0, 0, 0, 0, 0, CFG)
    center = compose_tile_loss(0, 0, 0, 0, 0.8, CFG)
    assert tile_objective([zero] * 4, center, CFG) == pytest.approx(0.4, abs=1e-12)


def test_tile_objective_matches_direct_composition():
    rng = np.random.default_rng(7)
    for _ in range(40):
        vals = rng.random((5, 5))
        parts = [compose_tile_loss(*row, CFG) for row in vals]
        expected = 0.0
        for i, row in enumerate(vals):
            total = row[0] + row[1] + 10 * row[2] + row[4] + 10 * row[3]
            expected += (0.25 if i < 4 else 0.5) * total
        got = tile_objective(parts[:4], parts[4], CFG)
        assert got == pytest.approx(expected, abs=1e-9)


def test_dims_mismatch_rejected():
    a = vol(np.zeros((4, 4, 4), dtype=np.float32), (4, 4, 4))
    b = vol(np.zeros((4, 4, 2), dtype=np.float32), (4, 4, 2))
    with pytest.raises(ValueError, match="dims mismatch"):
        density_multiplier(a, b, CFG)
    with pytest.raises(ValueError, match="dims mismatch"):
        cycle_loss(a, b, CFG)


def test_losses_require_normalized_inputs():
    raw = Volume3D(np.zeros((4, 4, 4), dtype=np.uint16), (1, 1, 1),
                   Kind.RAW, Provenance.REAL)
    norm = vol(np.zeros((4, 4, 4), dtype=np.float32), (4, 4, 4))
    with pytest.raises(ValueError, match="normalized"):
        cycle_loss(raw, norm, CFG)


def test_loss_config_validation():
    with pytest.raises(ValueError, match="fg_threshold"):
        LossConfig(fg_threshold=1.5)
    with pytest.raises(ValueError, match="w1"):
        LossConfig(w1=-0.1)
