"""Unit tests for the architecture table, width resolution and ablation variants."""

import pytest

from sinetlab.src.arch import (
    ABLATION_TOGGLES,
    SINET_TABLE,
    BlockRow,
    ModelSpec,
    SpecError,
    ablation_variants,
    build_desk_sinet,
    build_sinet,
    build_variant,
    resolve_channels,
    shape_trace,
)


class TestResolveChannels:
    """Tests for width-multiplier channel resolution."""

    @pytest.mark.parametrize(
        ("base", "w", "expected"),
        [(24, 1.0, 24), (40, 1.2, 48), (24, 1.8, 44), (96, 1.6, 154), (80, 1.2, 96)],
    )
    def test_known_values(self, base, w, expected):
        """Test rounding half up and then up to a multiple of the group count."""
        assert resolve_channels(base, w) == expected

    def test_result_divisible_by_groups(self):
        """Test the resolved width always splits evenly."""
        assert resolve_channels(40, 1.1, groups=4) % 4 == 0

    def test_rejects_non_positive_multiplier(self):
        """Test w <= 0 is rejected."""
        with pytest.raises(SpecError, match="positive"):
            resolve_channels(24, 0.0)

    @pytest.mark.parametrize("base", [row.channels for row in SINET_TABLE])
    def test_monotone_in_width(self, base):
        """Test a larger multiplier never gives fewer channels."""
        widths = [0.25 + 0.05 * i for i in range(40)]
        resolved = [resolve_channels(base, w) for w in widths]
        assert resolved == sorted(resolved)


class TestBuildSINet:
    """Tests for the resolved network description."""

    def test_reference_model(self):
        """Test w = 1.0 at 224 keeps the table widths and downsamples to 7x7."""
        spec = build_sinet(1.0)
        assert spec.block_channels == [24, 40, 80, 96, 192]
        assert spec.concat_width == 432
        assert spec.spatial_sizes() == [112, 56, 28, 14, 7, 7]
        assert [row.s for row in spec.blocks] == [2, 2, 2, 2, 1]
        assert spec.head.gate_widths == (8, 10, 20, 24, 48)

    def test_wider_model(self):
        """Test w = 1.8 widens every block."""
        assert build_sinet(1.8).block_channels == [44, 72, 144, 174, 346]

    def test_plain_head_has_no_gates(self):
        """Test the plain head carries no gate widths."""
        assert build_sinet(attention=False).head.gate_widths == ()

    def test_input_must_be_multiple_of_32(self):
        """Test resolutions that do not divide by 32 are rejected."""
        with pytest.raises(SpecError, match="multiple of 32"):
            build_sinet(1.0, input_hw=100)

    def test_exchange_needs_groups(self):
        """Test the exchange shortcut cannot be enabled with one group."""
        with pytest.raises(SpecError, match="groups >= 2"):
            build_sinet(1.0, groups=1, exchange=True)

    def test_desk_preset(self):
        """Test the desk preset keeps the last blocks at 4x4."""
        spec = build_desk_sinet()
        assert spec.input == 64
        assert spec.classes == 3
        assert spec.spatial_sizes() == [32, 16, 8, 4, 4, 4]
        assert [row.s for row in spec.blocks] == [2, 2, 2, 1, 1]

    def test_custom_repeats(self):
        """Test the units-per-block override."""
        spec = build_sinet(0.5, 10, 32, repeats=2)
        assert all(row.n == 2 for row in spec.blocks)
        assert [len(units) for units in spec.unit_configs()] == [2] * 5

    def test_unit_configs_follow_the_table(self):
        """Test the first unit of each block bridges from the previous width."""
        configs = build_sinet(1.0).unit_configs()
        assert [units[0].in_channels for units in configs] == [21, 24, 40, 80, 96]
        assert configs[0][0].groups == 1
        assert configs[1][0].groups == 2


class TestModelSpec:
    """Tests for validation and serialisation."""

    def test_json_round_trip(self):
        """Test a spec survives to_json/from_json unchanged."""
        spec = build_sinet(1.2, classes=10)
        assert ModelSpec.from_json(spec.to_json()) == spec

    def test_missing_field(self):
        """Test a missing required field names the field."""
        with pytest.raises(SpecError, match="blocks"):
            ModelSpec.from_dict({"width": 1.0, "classes": 10, "input": 224})

    def test_malformed_json(self):
        """Test invalid JSON raises SpecError."""
        with pytest.raises(SpecError, match="not valid JSON"):
            ModelSpec.from_json("{")

    def test_unknown_block_key(self):
        """Test unexpected keys in a block row are rejected."""
        data = build_sinet(1.0).to_dict()
        data["blocks"][0]["dilation"] = 2
        with pytest.raises(SpecError, match="Malformed"):
            ModelSpec.from_dict(data)

    @pytest.mark.parametrize("flag", ["exchange", "attention"])
    def test_string_flag_rejected(self, flag):
        """Test a quoted boolean in a hand-written spec is not read as true."""
        data = build_sinet(1.0).to_dict()
        data[flag] = "false"
        with pytest.raises(SpecError, match=flag):
            ModelSpec.from_dict(data)

    def test_indivisible_block_width(self):
        """Test block widths must split into the configured groups."""
        rows = (BlockRow(channels=30, k=3, s=2, n=2, t=1),)
        with pytest.raises(SpecError, match="divisible"):
            ModelSpec(width=1.0, classes=3, input=32, groups=4, blocks=rows, attention=False)

    def test_attention_needs_gate_widths(self):
        """Test an attention head needs one gate width per block."""
        with pytest.raises(SpecError, match="gate widths"):
            ModelSpec(width=1.0, classes=3, input=32, blocks=SINET_TABLE)

    def test_even_kernel_row(self):
        """Test table rows with even kernels are rejected."""
        with pytest.raises(SpecError, match="odd"):
            BlockRow(channels=8, k=4, s=1, n=1, t=1)


class TestVariants:
    """Tests for the ablation toggles."""

    def test_variant_names_and_toggles(self):
        """Test the four studied variants."""
        variants = ablation_variants(build_desk_sinet())
        assert list(variants) == list(ABLATION_TOGGLES)
        assert [(v.groups, v.exchange, v.attention) for v in variants.values()] == [
            (1, False, False),
            (2, False, False),
            (2, True, False),
            (2, True, True),
        ]

    def test_variants_share_widths(self):
        """Test toggles never change the resolved widths."""
        base = build_sinet(1.0)
        widths = {tuple(v.block_channels) for v in ablation_variants(base).values()}
        assert widths == {tuple(base.block_channels)}

    def test_attention_restores_gates(self):
        """Test re-enabling attention recreates the default gate widths."""
        plain = build_sinet(1.0, attention=False)
        assert build_variant(plain, attention=True).head.gate_widths == (8, 10, 20, 24, 48)

    def test_invalid_toggle_combination(self):
        """Test exchange with a single group is refused."""
        with pytest.raises(SpecError):
            build_variant(build_sinet(1.0), groups=1, exchange=True)


class TestShapeTrace:
    """Tests for the per-layer shape listing."""

    def test_reference_trace(self):
        """Test stem, block and head shapes of SINet at 224."""
        trace = {layer.name: layer for layer in shape_trace(build_sinet(1.0))}
        assert (trace["stem"].channels, trace["stem"].height) == (21, 112)
        assert (trace["block1.unit1"].channels, trace["block1.unit1"].height) == (24, 56)
        assert (trace["block5"].channels, trace["block5"].height) == (192, 7)
        assert trace["head.concat"].channels == 432
        assert trace["head.fc_hidden"].channels == 1280
        assert trace["head.fc_out"].channels == 1000

    def test_plain_trace_pools_last_block(self):
        """Test the plain head pools only the last block."""
        names = [layer.name for layer in shape_trace(build_sinet(1.0, attention=False))]
        assert "head.pool" in names
        assert "head.concat" not in names
