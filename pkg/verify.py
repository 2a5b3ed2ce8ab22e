#!/usr/bin/env python
"""
Verification script for the SI Unit network framework.
Runs the acceptance checks end to end: cost reproduction, grouping and exchange
accounting, gradient checks, decision-head equivalence, schedules and desk training.
"""

import sys
from pathlib import Path

# Add the project root to path
sys.path.insert(0, str(Path(__file__).parent))

print("=" * 80)
print("SINETLAB - VERIFICATION")
print("=" * 80)

# Test 1: Import all modules
print("\n[1/8] Testing imports...")
try:
    import numpy as np

    from sinetlab.src.analyzer import analyze, conv_cost, diff
    from sinetlab.src.arch import ablation_variants, build_desk_sinet, build_sinet, build_variant
    from sinetlab.src.blocks import exchange_shortcut
    from sinetlab.src.decision import AttentionHeadParams, compress, joint_logits
    from sinetlab.src.gradcheck import run_suite
    from sinetlab.src.network import SINet
    from sinetlab.src.tensor import Tensor, concat_channels, mul, softmax
    from sinetlab.src.train import (
        TRAIN_PRESETS,
        DatasetDescriptor,
        linear_oracle_accuracy,
        lr_at,
        make_dataset,
        train,
    )

    print("✓ All modules imported successfully")
except Exception as e:
    print(f"✗ Import failed: {e}")
    sys.exit(1)

# Test 2: Cost reproduction
print("\n[2/8] Testing cost totals against the reference table...")
try:
    reference = {1.0: (3.0e6, 208e6), 1.2: (3.9e6, 280e6), 1.6: (6.0e6, 468e6), 1.8: (7.6e6, 570e6)}
    for w, (params, madds) in reference.items():
        totals = analyze(build_sinet(w)).totals
        assert abs(totals.params - params) <= 0.15 * params, f"w={w}: {totals.params} params"
        assert abs(totals.madds - madds) <= 0.15 * madds, f"w={w}: {totals.madds} madds"
        print(f"  w={w}: {totals.params / 1e6:.2f}M params, {totals.madds / 1e6:.1f}M madds")
    print("✓ All widths within 15% of the reference totals")
except Exception as e:
    print(f"✗ Cost test failed: {e}")
    sys.exit(1)

# Test 3: Group saving and counter oracle
print("\n[3/8] Testing grouped convolution accounting...")
try:
    assert conv_cost(4, 8, 8, 3, 8, g=2).madds * 2 == conv_cost(4, 8, 8, 3, 8).madds
    mini = build_sinet(0.25, classes=4, input_hw=32, repeats=3)
    model = SINet.from_spec(mini)
    report = analyze(mini)
    assert model.count_madds() == report.totals.madds, "Executed madds differ from the analyzer"
    assert model.parameter_count() == report.totals.params, "Parameter count differs"
    print("✓ Analyzer matches the executed multiply-adds exactly")
except Exception as e:
    print(f"✗ Grouping test failed: {e}")
    sys.exit(1)

# Test 4: Exchange neutrality and attention cost
print("\n[4/8] Testing exchange and attention costs...")
try:
    base = build_sinet(1.0)
    variants = ablation_variants(base)
    assert analyze(variants["B"]).to_json() == analyze(variants["C"]).to_json()
    x = Tensor(np.random.default_rng(0).standard_normal((1, 4, 3, 3)))
    swapped = exchange_shortcut(x, [lambda t: mul(t, Tensor(0.0))] * 2).data
    assert np.array_equal(swapped, np.concatenate([x.data[:, 2:], x.data[:, :2]], axis=1))
    delta = diff(analyze(build_variant(base, attention=False)), analyze(base))
    assert delta.params > 0 and delta.relative_madds < 0.02
    print(f"✓ Exchange is free; attention adds {delta.relative_madds:.3%} multiply-adds")
except Exception as e:
    print(f"✗ Exchange/attention test failed: {e}")
    sys.exit(1)

# Test 5: Gradient suite
print("\n[5/8] Testing gradients over 5 seeds...")
try:
    failures = [
        (seed, r.name, r.max_rel_error)
        for seed in range(5)
        for r in run_suite(seed)
        if not r.passed
    ]
    assert not failures, f"Failing cases: {failures}"
    print("✓ All operator and block gradients within 1e-4")
except Exception as e:
    print(f"✗ Gradient test failed: {e}")
    sys.exit(1)

# Test 6: Decision head equivalence
print("\n[6/8] Testing decision head...")
try:
    rng = np.random.default_rng(0)
    outputs = [Tensor(rng.standard_normal((2, c, 4, 4))) for c in (4, 6, 8)]
    head = AttentionHeadParams.init([4, 6, 8], 5, rng, width=16)
    zs = compress(outputs)
    ones = [Tensor(np.ones((2, 1)))] * 3
    gated = joint_logits(zs, ones, head.classifier).data
    baseline = joint_logits([concat_channels(zs)], None, head.classifier).data
    assert np.max(np.abs(gated - baseline)) <= 1e-12
    assert np.max(np.abs(softmax(Tensor(gated)).data.sum(axis=1) - 1.0)) <= 1e-12
    print("✓ Unit gates reproduce the concat baseline")
except Exception as e:
    print(f"✗ Decision head test failed: {e}")
    sys.exit(1)

# Test 7: Schedules
print("\n[7/8] Testing learning-rate schedules...")
try:
    imagenet, cifar = TRAIN_PRESETS["imagenet"], TRAIN_PRESETS["cifar"]
    assert all(lr_at(e, imagenet) == 0.045 * 0.98**e for e in range(150))
    assert lr_at(79, cifar) == 0.01 and lr_at(80, cifar) == 0.01 / 10
    print("✓ Exponential and step schedules are exact")
except Exception as e:
    print(f"✗ Schedule test failed: {e}")
    sys.exit(1)

# Test 8: Desk training
print("\n[8/8] Testing desk-scale training (this takes a few minutes)...")
try:
    data = make_dataset(DatasetDescriptor())
    oracle = linear_oracle_accuracy(data)
    assert oracle > 0.95, f"Linear oracle only reaches {oracle:.3f}"
    history = train(build_desk_sinet(), data, TRAIN_PRESETS["desk"])
    assert history.final_accuracy > 0.9, f"Final accuracy {history.final_accuracy:.3f}"
    print(f"✓ Oracle {oracle:.3f}, desk SINet {history.final_accuracy:.3f} after 30 epochs")
except Exception as e:
    print(f"✗ Training test failed: {e}")
    sys.exit(1)

print("\n" + "=" * 80)
print("ALL VERIFICATION TESTS PASSED!")
print("=" * 80)
print("\nImplementation Summary:")
print("  ✓ Cost totals reproduce the reference widths")
print("  ✓ Analyzer and executed multiply-adds agree")
print("  ✓ Exchange shortcut is cost-free, attention under 2%")
print("  ✓ Gradients verified by finite differences")
print("  ✓ Joint decision head equivalence holds")
print("  ✓ Desk-scale training beats the 0.9 threshold")
