"""Unit tests for the SI Unit building blocks."""

import logging

import numpy as np
import pytest
from numpy.testing import assert_allclose

from sinetlab.src.blocks import (
    BlockParams,
    BottleneckConfig,
    BottleneckParams,
    ConvBN,
    SIUnitConfig,
    SIUnitParams,
    composite_h,
    dense_funnel,
    exchange_shortcut,
    si_block,
    si_block_configs,
    si_unit,
)
from sinetlab.src.tensor import (
    BatchNormState,
    ConvParams,
    DimensionError,
    GroupError,
    Tensor,
    add,
    conv2d,
    mul,
    relu6,
    sigmoid,
    split_channels,
)


def _exact_conv_bn(weight: np.ndarray, groups: int = 1) -> ConvBN:
    """ConvBN whose eval-mode BN is the identity (mean 0, var 1, eps 0)."""

    channels = weight.shape[0]
    return ConvBN(
        conv=ConvParams(weight=Tensor(weight), groups=groups),
        gamma=Tensor(np.ones(channels)),
        beta=Tensor(np.zeros(channels)),
        state=BatchNormState.fresh(channels, eps=0.0),
    )


def _identity_bottleneck(channels: int, kernel_size: int = 3) -> BottleneckParams:
    pointwise = np.eye(channels).reshape(channels, channels, 1, 1)
    depthwise = np.zeros((channels, 1, kernel_size, kernel_size))
    depthwise[:, 0, kernel_size // 2, kernel_size // 2] = 1.0
    return BottleneckParams(
        expand=_exact_conv_bn(pointwise),
        depthwise=_exact_conv_bn(depthwise, groups=channels),
        project=_exact_conv_bn(pointwise.copy()),
    )


def _positive(shape, seed=0) -> Tensor:
    """Values inside ReLU6's linear region."""

    return Tensor(np.random.default_rng(seed).uniform(0.5, 5.0, size=shape))


def _zero_branch(t: Tensor) -> Tensor:
    return mul(t, Tensor(0.0))


def _identity_branch(t: Tensor) -> Tensor:
    return t


class TestConfigs:
    """Tests for the declarative bottleneck and unit configs."""

    def test_bottleneck_hidden_width(self):
        """Test the hidden width is expansion times the input width."""
        assert BottleneckConfig(12, 12, expansion=6).hidden == 72

    def test_bottleneck_rejects_even_kernel(self):
        """Test even kernel sizes are rejected."""
        with pytest.raises(ValueError, match="odd"):
            BottleneckConfig(4, 4, kernel_size=4)

    def test_unit_branch_divides_channels(self):
        """Test each branch sees 1/g of the unit's channels."""
        branch = SIUnitConfig(48, 48, kernel_size=5, expansion=6, groups=2).branch
        assert (branch.in_channels, branch.out_channels, branch.hidden) == (24, 24, 144)

    def test_unit_indivisible_channels(self):
        """Test odd widths cannot be split into two groups."""
        with pytest.raises(GroupError):
            SIUnitConfig(21, 24, stride=2, groups=2, exchange=False, funnel=False)

    def test_exchange_needs_two_groups(self):
        """Test the exchange shortcut is refused for a single group."""
        with pytest.raises(ValueError, match="two groups"):
            SIUnitConfig(8, 8, groups=1, exchange=True)

    def test_exchange_needs_shape_preserving_unit(self):
        """Test a strided unit cannot carry the exchange shortcut."""
        with pytest.raises(ValueError, match="stride-1"):
            SIUnitConfig(8, 16, stride=2, groups=2, exchange=True, funnel=False)

    def test_block_layout(self):
        """Test transition, exchange and funnel placement inside a block."""
        units = si_block_configs(24, 40, kernel_size=5, expansion=3, repeats=4)
        assert [u.stride for u in units] == [2, 1, 1, 1]
        assert [u.exchange for u in units] == [False, True, True, True]
        assert [u.funnel for u in units] == [False, False, True, True]
        assert all(u.groups == 2 for u in units)

    def test_block_layout_without_exchange(self):
        """Test the exchange toggle only switches the shortcut wiring."""
        units = si_block_configs(24, 40, kernel_size=5, expansion=3, repeats=4, exchange=False)
        assert not any(u.exchange for u in units)
        assert [u.funnel for u in units] == [False, False, True, True]

    def test_ungrouped_transition_is_logged(self, caplog):
        """Test an odd stem width makes the transition unit ungrouped."""
        with caplog.at_level(logging.INFO, logger="sinetlab.src.blocks"):
            units = si_block_configs(21, 24, kernel_size=3, expansion=3, repeats=2)
        assert units[0].groups == 1
        assert units[1].groups == 2
        assert "ungrouped" in caplog.text

    def test_block_needs_a_unit(self):
        """Test zero repeats are rejected."""
        with pytest.raises(ValueError, match="at least one unit"):
            si_block_configs(8, 8, kernel_size=3, expansion=1, repeats=0)


class TestCompositeH:
    """Tests for the inverted-bottleneck composite function."""

    def test_identity_construction(self):
        """Test identity pointwise weights and a centre-tap depthwise kernel reproduce x."""
        x = _positive((2, 4, 6, 6))
        out = composite_h(x, BottleneckConfig(4, 4), _identity_bottleneck(4), mode="eval")
        assert_allclose(out.data, x.data, atol=1e-12)

    def test_stride_two_halves_resolution(self):
        """Test a stride-2 bottleneck maps 8x8 to 4x4."""
        cfg = BottleneckConfig(4, 6, kernel_size=3, stride=2, expansion=2)
        params = BottleneckParams.init(cfg, np.random.default_rng(0))
        out = composite_h(Tensor(np.ones((2, 4, 8, 8))), cfg, params)
        assert out.shape == (2, 6, 4, 4)

    def test_channel_mismatch(self):
        """Test a wrong input width raises DimensionError."""
        cfg = BottleneckConfig(4, 4)
        params = BottleneckParams.init(cfg, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            composite_h(Tensor(np.ones((1, 3, 4, 4))), cfg, params)


class TestExchangeShortcut:
    """Tests for the crosswise residual."""

    def test_zero_branches_swap_halves(self):
        """Test H = 0 makes the output the input with its halves swapped."""
        x = Tensor(np.random.default_rng(0).standard_normal((1, 4, 3, 3)))
        out = exchange_shortcut(x, [_zero_branch, _zero_branch])
        assert_allclose(out.data[:, :2], x.data[:, 2:])
        assert_allclose(out.data[:, 2:], x.data[:, :2])

    def test_identity_branches_sum_halves(self):
        """Test H = identity gives X1 + X2 in both halves."""
        x = Tensor(np.random.default_rng(1).standard_normal((1, 4, 3, 3)))
        out = exchange_shortcut(x, [_identity_branch, _identity_branch])
        total = x.data[:, :2] + x.data[:, 2:]
        assert_allclose(out.data[:, :2], total)
        assert_allclose(out.data[:, 2:], total)

    def test_exchange_off_keeps_own_residual(self):
        """Test the plain residual: each group adds its own input."""
        x = Tensor(np.random.default_rng(2).standard_normal((1, 4, 3, 3)))
        out = exchange_shortcut(x, [_identity_branch, _identity_branch], exchange=False)
        assert_allclose(out.data, 2 * x.data)

    def test_swapping_halves_and_branches_swaps_output(self):
        """Test the two-group exchange is symmetric under swapping groups and branches."""
        x = Tensor(np.random.default_rng(3).standard_normal((2, 6, 4, 4)))
        halves = split_channels(x, 2)
        swapped = Tensor(np.concatenate([halves[1].data, halves[0].data], axis=1))

        out = exchange_shortcut(x, [relu6, sigmoid]).data
        mirrored = exchange_shortcut(swapped, [sigmoid, relu6]).data
        assert_allclose(mirrored, np.concatenate([out[:, 3:], out[:, :3]], axis=1))

    def test_three_groups_rotate(self):
        """Test group i receives the shortcut of group i + 1 mod g."""
        x = Tensor(np.arange(3.0).reshape(1, 3, 1, 1))
        out = exchange_shortcut(x, [_zero_branch] * 3)
        assert_allclose(out.data.reshape(-1), [1.0, 2.0, 0.0])

    def test_shape_changing_branch_rejected(self):
        """Test branches that alter the shape cannot take a shortcut."""
        conv = ConvParams.init(2, 2, 3, np.random.default_rng(0), stride=2)

        def strided(t):
            return conv2d(t, conv)

        with pytest.raises(DimensionError):
            exchange_shortcut(Tensor(np.ones((1, 4, 4, 4))), [strided, strided])


class TestDenseFunnel:
    """Tests for the dense funnel."""

    def test_selects_current_output(self):
        """Test a 1x1 weight selecting the current half returns the current features."""
        weight = np.zeros((2, 4, 1, 1))
        weight[0, 2, 0, 0] = weight[1, 3, 0, 0] = 1.0
        prev, current = _positive((1, 2, 3, 3), seed=1), _positive((1, 2, 3, 3), seed=2)
        out = dense_funnel(prev, current, _exact_conv_bn(weight), mode="eval")
        assert_allclose(out.data, current.data, atol=1e-12)

    def test_squeezes_back_to_unit_width(self):
        """Test 32 + 32 concatenated channels are squeezed back to 32."""
        rng = np.random.default_rng(0)
        x = Tensor(rng.standard_normal((2, 32, 4, 4)))
        out = dense_funnel(x, x, ConvBN.init(64, 32, 1, rng))
        assert out.shape == (2, 32, 4, 4)

    def test_spatial_mismatch(self):
        """Test different spatial sizes raise DimensionError."""
        squeeze = ConvBN.init(4, 2, 1, np.random.default_rng(0))
        with pytest.raises(DimensionError):
            dense_funnel(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 2, 2, 2))), squeeze)


class TestSIUnit:
    """Tests for the composed unit and block."""

    def test_single_group_is_bottleneck_plus_funnel(self):
        """Test g = 1 without exchange equals residual bottleneck followed by the funnel."""
        rng = np.random.default_rng(0)
        cfg = SIUnitConfig(4, 4, groups=1, exchange=False, funnel=True, expansion=2)
        params = SIUnitParams.init(cfg, rng)
        x = Tensor(rng.standard_normal((2, 4, 5, 5)))

        out = si_unit(x, cfg, params, mode="eval")
        residual = add(composite_h(x, cfg.branch, params.branches[0], mode="eval"), x)
        expected = dense_funnel(x, residual, params.funnel, mode="eval")
        assert_allclose(out.data, expected.data, atol=1e-12)

    def test_transition_unit_concatenates_branches(self):
        """Test a strided unit changes width and halves the resolution."""
        rng = np.random.default_rng(1)
        cfg = SIUnitConfig(8, 12, stride=2, groups=2, exchange=False, funnel=False)
        out = si_unit(Tensor(rng.standard_normal((1, 8, 8, 8))), cfg, SIUnitParams.init(cfg, rng))
        assert out.shape == (1, 12, 4, 4)

    def test_funnel_params_only_when_enabled(self):
        """Test the funnel convolution is created only for funnel units."""
        rng = np.random.default_rng(0)
        assert SIUnitParams.init(SIUnitConfig(8, 8, funnel=False), rng).funnel is None
        funnel = SIUnitParams.init(SIUnitConfig(8, 8), rng).funnel
        assert funnel.conv.weight.shape == (8, 16, 1, 1)

    def test_block_of_four_units(self):
        """Test a four-unit block with stride 2 maps 32x32 to 16x16."""
        rng = np.random.default_rng(0)
        units = si_block_configs(8, 16, kernel_size=3, expansion=1, repeats=4)
        params = BlockParams.init(units, rng)
        out = si_block(Tensor(rng.standard_normal((2, 8, 32, 32))), units, params.units)
        assert out.shape == (2, 16, 16, 16)

    def test_block_param_mismatch(self):
        """Test configs and parameters must pair up."""
        units = si_block_configs(8, 8, kernel_size=3, expansion=1, repeats=2, stride=1)
        params = BlockParams.init(units[:1], np.random.default_rng(0))
        with pytest.raises(ValueError, match="parameter sets"):
            si_block(Tensor(np.ones((1, 8, 4, 4))), units, params.units)
