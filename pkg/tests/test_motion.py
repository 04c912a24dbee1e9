import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipeflow.errors import BadConfig, ChannelError, DimensionMismatch, TooSmall
from pipeflow.frameio import Frame
from pipeflow.motion import (
    SSIM_C1,
    SSIM_C2,
    FlowConfig,
    FlowField,
    GrayFrame,
    estimate_flow,
    flow_from_bytes,
    flow_oracle_blockmatch,
    flow_to_bytes,
    mean_flow_magnitude,
    ssim_global,
    to_gray,
)
from pipeflow.synthetic import random_texture, shift

INTERIOR = (slice(8, -8), slice(8, -8))


def test_gray_white_and_red():
    white = Frame(np.full((4, 4, 3), 255, np.uint8))
    assert np.all(to_gray(white).as_uint8() == 255)
    red = np.zeros((4, 4, 3), np.uint8)
    red[..., 0] = 255
    assert np.all(to_gray(Frame(red)).as_uint8() == 76)


def test_gray_identity_for_single_channel(rng):
    px = rng.integers(0, 256, (5, 7), dtype=np.uint8)
    g = to_gray(Frame(px))
    assert np.array_equal(g.as_uint8(), px)
    assert g.as_uint8().tobytes() == px.tobytes()


def test_gray_rejects_other_channel_counts():
    class Fake:
        pixels = np.zeros((2, 2, 4), np.uint8)
        index = 0

    with pytest.raises(ChannelError):
        to_gray(Fake())


def test_ssim_constant_images():
    # zero variance: the structure term reduces to C2 / C2
    expected = (2 * 100 * 120 + SSIM_C1) * SSIM_C2 / ((100**2 + 120**2 + SSIM_C1) * SSIM_C2)
    got = ssim_global(GrayFrame(np.full((8, 8), 100.0)), GrayFrame(np.full((8, 8), 120.0)))
    assert got == pytest.approx(expected, abs=1e-12)
    assert got == pytest.approx(0.98361, abs=1e-4)


def test_ssim_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        ssim_global(GrayFrame(np.zeros((4, 4))), GrayFrame(np.zeros((4, 5))))


def test_ssim_naive_oracle(rng):
    a = rng.integers(0, 256, (6, 5)).astype(float)
    b = rng.integers(0, 256, (6, 5)).astype(float)
    xs, ys = a.ravel().tolist(), b.ravel().tolist()
    n = len(xs)
    mx, my = sum(xs) / n, sum(ys) / n
    vx = sum((x - mx) ** 2 for x in xs) / n
    vy = sum((y - my) ** 2 for y in ys) / n
    cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n
    expected = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2) / ((mx**2 + my**2 + SSIM_C1) * (vx + vy + SSIM_C2))
    assert ssim_global(GrayFrame(a), GrayFrame(b)) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), h=st.integers(1, 40), w=st.integers(2, 40))
def test_ssim_identity_symmetry_permutation(seed, h, w):
    rng = np.random.default_rng(seed)
    a = GrayFrame(rng.integers(0, 256, (h, w)).astype(float))
    b = GrayFrame(rng.integers(0, 256, (h, w)).astype(float))
    assert abs(ssim_global(a, a) - 1.0) <= 1e-9
    s = ssim_global(a, b)
    assert s <= 1.0 + 1e-12
    assert abs(s - ssim_global(b, a)) <= 1e-12
    perm = rng.permutation(h * w)
    pa = GrayFrame(a.data.ravel()[perm].reshape(h, w))
    pb = GrayFrame(b.data.ravel()[perm].reshape(h, w))
    assert ssim_global(pa, pb) == pytest.approx(s, abs=1e-12)


def test_mean_flow_magnitude_cases():
    assert mean_flow_magnitude(FlowField.zeros(4, 4)) == 0.0
    assert mean_flow_magnitude(FlowField(np.full((3, 5), 3.0), np.full((3, 5), 4.0))) == 5.0
    u = np.zeros((4, 4))
    u[:2] = 1.0
    assert mean_flow_magnitude(FlowField(u, np.zeros((4, 4)))) == 0.5


def test_flow_field_rejects_nonfinite():
    with pytest.raises(ValueError):
        FlowField(np.array([[np.nan]]), np.zeros((1, 1)))


# -- block-matching oracle -------------------------------------------------------

def test_oracle_identical_frames_zero(rng):
    a = GrayFrame(random_texture(32, 32, rng))
    f = flow_oracle_blockmatch(a, a, 3, 5)
    assert not f.u.any() and not f.v.any()


def test_oracle_flat_frames_tie_break_to_zero():
    a = GrayFrame(np.full((20, 20), 80.0))
    f = flow_oracle_blockmatch(a, a, 2, 3)
    assert not f.u.any() and not f.v.any()


def test_oracle_recovers_integer_shift(rng):
    tex = random_texture(64, 64, rng)
    f = flow_oracle_blockmatch(GrayFrame(tex), GrayFrame(shift(tex, 2, -1)), 3, 7)
    assert np.all(f.u[INTERIOR] == 2) and np.all(f.v[INTERIOR] == -1)


def test_oracle_config_errors(rng):
    a = GrayFrame(np.zeros((8, 8)))
    with pytest.raises(BadConfig):
        flow_oracle_blockmatch(a, a, 0, 3)
    with pytest.raises(BadConfig):
        flow_oracle_blockmatch(a, a, 2, 4)
    with pytest.raises(DimensionMismatch):
        flow_oracle_blockmatch(a, GrayFrame(np.zeros((8, 9))), 2, 3)


# -- estimator -----------------------------------------------------------------------

def test_flow_zero_motion(rng):
    a = GrayFrame(random_texture(64, 64, rng))
    assert mean_flow_magnitude(estimate_flow(a, a)) <= 0.1


def test_flow_uniform_pair():
    f = estimate_flow(GrayFrame(np.full((32, 32), 90.0)), GrayFrame(np.full((32, 32), 140.0)))
    assert f.magnitude().max() <= 0.1


def test_flow_matches_oracle_on_shift(rng):
    tex = random_texture(128, 128, rng)
    a, b = GrayFrame(tex), GrayFrame(shift(tex, 3, 4))
    oracle = flow_oracle_blockmatch(a, b, 6, 9)
    assert np.all(oracle.u[INTERIOR] == 3) and np.all(oracle.v[INTERIOR] == 4)
    f = estimate_flow(a, b)
    err = np.hypot(f.u - oracle.u, f.v - oracle.v)[INTERIOR]
    assert np.all(err <= 0.5)
    assert abs(mean_flow_magnitude(FlowField(f.u[INTERIOR], f.v[INTERIOR])) - 5.0) <= 0.25


def test_flow_non_square(rng):
    tex = random_texture(48, 80, rng)
    f = estimate_flow(GrayFrame(tex), GrayFrame(shift(tex, -2, 1)))
    assert f.u.shape == (48, 80)
    assert np.median(f.u[INTERIOR]) == pytest.approx(-2, abs=0.1)
    assert np.median(f.v[INTERIOR]) == pytest.approx(1, abs=0.1)


def test_flow_errors():
    with pytest.raises(TooSmall):
        estimate_flow(GrayFrame(np.zeros((15, 40))), GrayFrame(np.zeros((15, 40))))
    with pytest.raises(DimensionMismatch):
        estimate_flow(GrayFrame(np.zeros((16, 16))), GrayFrame(np.zeros((16, 17))))
    with pytest.raises(BadConfig):
        FlowConfig(window=4)


def test_flow_binary_round_trip(rng):
    f = FlowField(rng.standard_normal((5, 7)).astype(np.float32), rng.standard_normal((5, 7)).astype(np.float32))
    blob = flow_to_bytes(f)
    assert blob[:8] == (7).to_bytes(4, "little") + (5).to_bytes(4, "little")
    assert len(blob) == 8 + 2 * 4 * 35
    g = flow_from_bytes(blob)
    assert np.array_equal(g.u, f.u) and np.array_equal(g.v, f.v)
