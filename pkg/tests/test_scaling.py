import math
import warnings

import pytest

from cardiotwin.errors import ConfigError
from cardiotwin.scaling import (
    ScalingCoeffs,
    ScalingConfig,
    ScalingConstraintWarning,
    StageSpec,
    compound_scale,
    count_macs,
    count_params,
)


def test_phi_zero_resolves_to_the_base_architecture():
    config = ScalingConfig(phi=0.0)
    arch = config.resolve()
    assert arch.resolution == config.base_resolution
    assert [(s.kernel, s.width, s.repeats) for s in arch.stages] == [
        (s.kernel, s.width, s.repeats) for s in config.stages
    ]


@pytest.mark.filterwarnings("ignore::cardiotwin.scaling.ScalingConstraintWarning")
def test_depth_scales_by_ceiling():
    # 3 repeats at alpha=1.2: 3 * 1.2 = 3.6 -> 4.
    arch = compound_scale(1.0, ScalingCoeffs(1.2, 1.0, 1.0),
                          (StageSpec(3, 16, 3),), base_resolution=24)
    assert arch.stages[0].repeats == 4
    arch2 = compound_scale(2.0, ScalingCoeffs(1.2, 1.0, 1.0),
                           (StageSpec(3, 16, 3),), base_resolution=24)
    assert arch2.stages[0].repeats == math.ceil(3 * 1.2 ** 2)


@pytest.mark.filterwarnings("ignore::cardiotwin.scaling.ScalingConstraintWarning")
def test_width_rounds_to_a_multiple_of_four_with_a_floor():
    coeffs = ScalingCoeffs(1.0, 1.1, 1.0)
    w1 = compound_scale(1.0, coeffs, (StageSpec(3, 16, 1),), 24).stages[0].width
    assert w1 == 16  # 16 * 1.1 = 17.6 -> nearest multiple of 4 is 16
    w2 = compound_scale(2.0, coeffs, (StageSpec(3, 16, 1),), 24).stages[0].width
    assert w2 == 20  # 16 * 1.21 = 19.36 -> 20
    tiny = compound_scale(0.0, ScalingCoeffs(1.0, 1.0, 1.0), (StageSpec(3, 4, 1),), 24)
    assert tiny.stages[0].width == 4  # floor


@pytest.mark.filterwarnings("ignore::cardiotwin.scaling.ScalingConstraintWarning")
def test_resolution_scales_and_stays_even():
    arch = compound_scale(1.0, ScalingCoeffs(1.0, 1.0, 1.15), (StageSpec(3, 16, 1),), 24)
    assert arch.resolution == 28  # 24 * 1.15 = 27.6 -> 28
    odd = compound_scale(1.0, ScalingCoeffs(1.0, 1.0, 25.0 / 24.0),
                         (StageSpec(3, 16, 1),), 24)
    assert odd.resolution == 26  # rounds to 25, forced up to even
    assert odd.resolution % 2 == 0


def test_fractional_phi_is_legal_and_monotone():
    sizes = []
    for phi in (0.0, 0.5, 1.0, 2.0):
        arch = ScalingConfig(phi=phi).resolve()
        sizes.append((
            arch.resolution,
            sum(s.repeats for s in arch.stages),
            max(s.width for s in arch.stages),
        ))
    for a, b in zip(sizes, sizes[1:]):
        assert all(x <= y for x, y in zip(a, b))
    assert sizes[0] < sizes[-1]


def test_default_coefficients_satisfy_the_budget_constraint():
    c = ScalingCoeffs(1.2, 1.1, 1.15)
    assert c.constraint() == pytest.approx(1.9203, abs=1e-4)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ScalingConfig(phi=1.0, coeffs=c).resolve()  # must not warn


def test_constraint_outside_band_warns_but_still_resolves():
    wild = ScalingCoeffs(2.0, 1.2, 1.2)
    with pytest.warns(ScalingConstraintWarning):
        arch = ScalingConfig(phi=1.0, coeffs=wild).resolve()
    assert arch.resolution >= 24


def test_config_validation():
    with pytest.raises(ConfigError):
        StageSpec(kernel=4, width=16, repeats=1)  # even kernel
    with pytest.raises(ConfigError):
        StageSpec(kernel=3, width=18, repeats=1)  # not a multiple of 4
    with pytest.raises(ConfigError):
        StageSpec(kernel=3, width=16, repeats=0)
    with pytest.raises(ConfigError):
        ScalingConfig(base_resolution=6)  # below the minimum input size
    with pytest.raises(ConfigError):
        ScalingConfig(base_resolution=25)  # odd
    with pytest.raises(ConfigError):
        ScalingConfig(phi=-1.0)
    with pytest.raises(ConfigError):
        ScalingCoeffs(0.9, 1.1, 1.15)  # coefficients below one shrink the net


def test_mac_count_matches_a_hand_recount():
    arch = ScalingConfig(phi=0.0).resolve()

    # Independent recount with plain loops: stem halves the grid with
    # ceil division, then each stage runs depthwise + pointwise blocks.
    def ceil_half(x):
        return -(-x // 2)

    px = ceil_half(arch.resolution) ** 2
    cin = arch.in_channels
    total = px * 9 * cin * arch.stages[0].width  # 3x3 stem
    ch = arch.stages[0].width
    for stage in arch.stages:
        for _ in range(stage.repeats):
            total += px * stage.kernel * stage.kernel * ch  # depthwise
            total += px * ch * stage.width  # pointwise
            ch = stage.width
    total += ch * arch.n_classes
    assert count_macs(arch) == total
    assert count_macs(arch) == 728128


def test_param_count_tracks_architecture_growth():
    p0 = count_params(ScalingConfig(phi=0.0).resolve())
    p1 = count_params(ScalingConfig(phi=1.0).resolve())
    assert p0 == 5410
    assert p1 > p0


def test_mac_growth_per_phi_step_sits_near_the_constraint():
    macs = [count_macs(ScalingConfig(phi=float(p)).resolve()) for p in range(3)]
    for a, b in zip(macs, macs[1:]):
        assert 1.5 <= b / a <= 2.5


def test_json_round_trip_preserves_fractional_phi():
    config = ScalingConfig(phi=0.5, coeffs=ScalingCoeffs(1.25, 1.05, 1.2),
                           base_resolution=32,
                           stages=(StageSpec(5, 8, 2), StageSpec(3, 24, 1)))
    doc = config.to_json()
    again = ScalingConfig.from_json(doc)
    assert again == config
    assert isinstance(again.phi, float)
