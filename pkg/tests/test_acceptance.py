"""Acceptance gates for the whole package.

Each test covers one numbered criterion end to end and prints a single
summary line with the measured values next to the pinned tolerance, so a
plain ``pytest -v -s tests/test_acceptance.py`` reads as a checklist.
All tolerances live here, in-line, and nothing is mocked: training runs
train, file tests hit the disk, and the brute-force oracles are written
from scratch in this file.
"""

import dataclasses
import hashlib
import json
import math
import time

import numpy as np

from voxsem.checkpoint import load_checkpoint, save_checkpoint
from voxsem.config import HyperParams, desk_scale, full_scale, micro_scale, tiny_scale, validate_config
from voxsem.errors import FormatError
from voxsem.experiment import ExperimentConfig, RunConfig, build_dataset, run_experiment
from voxsem.gradcheck import grad_check
from voxsem.losses import (
    adversarial_discriminator_loss,
    adversarial_generator_loss,
    kl_divergence,
    per_voxel_error,
    reconstruction_loss,
    vae_loss,
)
from voxsem.metrics import argmax_labels, average_precision, evaluate, iou_counts
from voxsem.networks import GaussianLatent, build_models
from voxsem.ops import (
    channel_slice,
    conv2d,
    conv3d,
    deconv3d,
    dense,
    flatten,
    leaky_relu,
    maxpool2d,
    relu,
    sigmoid,
)
from voxsem.scenes import DepthImage, SceneConfig, SemanticVolume
from voxsem.splits import kfold_split
from voxsem.tensor import (
    Tensor,
    _make,
    accumulate_grad,
    add,
    clamp,
    exp,
    log,
    mul,
    reduce_mean,
    reduce_sum,
    reshape,
)
from voxsem.trainer import TrainState, prepare_samples, train
from voxsem.transforms import one_hot
from voxsem.vsem import Dataset, load_dataset, load_depth, load_volume, save_dataset, save_depth, save_volume


def report_line(number: int, label: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"criterion {number} ({label}): {status} [{detail}]")


def away_from_kinks(rng, shape):
    """Normal draws pushed away from zero so piecewise ops stay smooth
    within the finite-difference step."""
    data = rng.normal(size=shape)
    return data + 0.25 * np.sign(data)


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def projected(build_out, rng):
    """Close a fresh forward pass over one frozen random projection, so
    the checked function is deterministic but every output coordinate
    still matters."""
    weights = Tensor(rng.normal(size=build_out().shape))
    return lambda: reduce_sum(mul(build_out(), weights))


# ---------------------------------------------------------------- 1 --


def op_checks(rng):
    """(name, loss_fn, leaves) triples for every differentiable op."""
    checks = []

    def add_check(name, build_out, leaves):
        checks.append((name, (projected(build_out, rng), leaves)))

    x, y = leaf(rng.normal(size=(4, 3))), leaf(rng.normal(size=(3,)))
    add_check("add", lambda: add(x, y), [x, y])
    add_check("mul", lambda: mul(x, mul(y, y)), [x, y])
    p = leaf(rng.uniform(0.5, 2.0, size=(3, 4)))
    add_check("log", lambda: log(p), [p])
    e = leaf(rng.normal(size=(3, 4)))
    add_check("exp", lambda: exp(e), [e])
    c = leaf(rng.uniform(-2.0, 2.0, size=(4, 3)))
    add_check("clamp", lambda: clamp(c, -1.0, 1.0), [c])
    s = leaf(rng.normal(size=(3, 5)))
    checks.append(("reduce_sum", (lambda: reduce_sum(s), [s])))
    checks.append(("reduce_mean", (lambda: reduce_mean(mul(s, s)), [s])))
    r = leaf(rng.normal(size=(4, 6)))
    add_check("reshape", lambda: reshape(r, (2, 12)), [r])

    x2, k2 = leaf(rng.normal(size=(7, 6, 2))), leaf(rng.normal(size=(3, 3, 2, 3)))
    add_check("conv2d", lambda: conv2d(x2, k2), [x2, k2])
    x3, k3 = leaf(rng.normal(size=(8, 7, 6, 2))), leaf(rng.normal(size=(4, 4, 4, 2, 3)))
    add_check("conv3d", lambda: conv3d(x3, k3), [x3, k3])
    g3, kd = leaf(rng.normal(size=(3, 3, 3, 2))), leaf(rng.normal(size=(4, 4, 4, 3, 2)))
    add_check("deconv3d", lambda: deconv3d(g3, kd), [g3, kd])
    xp = leaf(rng.normal(size=(7, 5, 2)))
    add_check("maxpool2d", lambda: maxpool2d(xp, 2), [xp])
    xd, wd, bd = leaf(rng.normal(size=(5,))), leaf(rng.normal(size=(5, 4))), leaf(rng.normal(size=(4,)))
    add_check("dense", lambda: dense(xd, wd, bd), [xd, wd, bd])
    a = leaf(away_from_kinks(rng, (4, 4)))
    add_check("relu", lambda: relu(a), [a])
    add_check("leaky_relu", lambda: leaky_relu(a, 0.2), [a])
    add_check("sigmoid", lambda: sigmoid(a), [a])
    f = leaf(rng.normal(size=(3, 4, 2)))
    add_check("flatten", lambda: flatten(f), [f])
    add_check("channel_slice", lambda: channel_slice(f, 1, 2), [f])
    return checks


def network_checks(models, rng):
    """One scalar-loss gradient check per network, all shapes <= 8."""
    depth = rng.uniform(0.5, 6.0, size=(8, 8))
    depth[rng.uniform(size=(8, 8)) < 0.1] = np.nan
    onehot = one_hot(rng.integers(0, 2, size=(8, 8, 8)).astype(np.uint8), 2)
    z = leaf(rng.normal(size=(4, 4, 4, 2)))
    z_fixed = rng.normal(size=(4, 4, 4, 2))

    mean_fn = projected(lambda: models.volume_encoder.forward(onehot).mean, rng)
    spread_fn = projected(lambda: models.volume_encoder.forward(onehot).log_variance, rng)

    return [
        ("depth_encoder",
         (projected(lambda: models.depth_encoder.forward(depth), rng),
          models.depth_encoder.params.tensors())),
        ("volume_encoder",
         (lambda: add(mean_fn(), spread_fn()),
          models.volume_encoder.params.tensors())),
        ("generator",
         (projected(lambda: models.generator.forward(z), rng),
          models.generator.params.tensors() + [z])),
        ("volume_disc",
         (lambda: models.volume_disc.forward(onehot),
          models.volume_disc.params.tensors())),
        ("latent_disc",
         (lambda: models.latent_disc.forward(z_fixed),
          models.latent_disc.params.tensors())),
    ]


def broken_double(x: Tensor) -> Tensor:
    """Forward doubles but the recorded gradient lies by 50%."""

    def grad_fn(g):
        accumulate_grad(x, 3.0 * g)

    return _make(2.0 * x.data, (x,), grad_fn)


def test_criterion_1_gradient_correctness():
    started = time.perf_counter()
    seeds = range(5)
    worst = 0.0
    worst_name = ""
    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        coord_rng = np.random.default_rng(2000 + seed)
        for name, (fn, leaves) in op_checks(rng):
            err = grad_check(fn, leaves, eps=1e-5, max_coords=48, rng=coord_rng)
            if err > worst:
                worst, worst_name = err, f"{name}@seed{seed}"
    for seed in seeds:
        rng = np.random.default_rng(3000 + seed)
        coord_rng = np.random.default_rng(4000 + seed)
        models = build_models(micro_scale(), seed=seed)
        for name, (fn, leaves) in network_checks(models, rng):
            err = grad_check(fn, leaves, eps=1e-5, max_coords=48, rng=coord_rng)
            if err > worst:
                worst, worst_name = err, f"{name}@seed{seed}"

    bad = leaf(np.random.default_rng(5).normal(size=(4,)))
    fault = grad_check(lambda: reduce_sum(broken_double(bad)), [bad], eps=1e-5)
    elapsed = time.perf_counter() - started

    ok = worst < 1e-4 and fault > 1e-2 and elapsed < 120.0
    report_line(1, "gradient correctness", ok,
                f"worst {worst:.3e} at {worst_name} (< 1e-4), "
                f"fault {fault:.3e} (> 1e-2), {elapsed:.1f}s (< 120s)")
    assert worst < 1e-4
    assert fault > 1e-2
    assert elapsed < 120.0


# ---------------------------------------------------------------- 2 --


def test_criterion_2_shape_fidelity():
    started = time.perf_counter()
    plan = validate_config(full_scale())
    elapsed = time.perf_counter() - started

    image = dict(plan.image_encoder)
    assert image["input"] == (320, 240, 2)
    assert image["conv_pool_5"] == (5, 3, 80)
    assert image["latent"] == (5, 3, 5, 16)
    assert dict(plan.vae_encoder)["mean_and_log_variance"] == (5, 3, 5, 32)
    generator = dict(plan.generator)
    assert generator["latent"] == (5, 3, 5, 16)
    assert generator["upsample_3"] == (80, 48, 80, 12)
    assert dict(plan.volume_disc)["flatten"] == (1200,)
    assert dict(plan.latent_disc)["latent"] == (5, 3, 5, 16)

    symbolic = True
    for field in dataclasses.fields(plan):
        for label, shape in getattr(plan, field.name):
            symbolic &= isinstance(label, str) and isinstance(shape, tuple)
            symbolic &= all(type(d) is int for d in shape)
    assert symbolic, "shape plan must stay symbolic (ints only, no arrays)"
    assert elapsed < 1.0

    report_line(2, "shape fidelity", True,
                f"input 320x240, encoder (5, 3, 80), latent (5, 3, 5, 16), "
                f"disc flatten 1200, output (80, 48, 80, 12), {elapsed * 1e3:.2f}ms (< 1s)")


# ---------------------------------------------------------------- 3 --


def test_criterion_3_loss_value_oracles():
    ln2 = math.log(2.0)
    checks = []

    half = Tensor(np.array([0.5]))
    checks.append(("positive error at 0.5",
                   float(per_voxel_error(half, np.array([1.0]), 0.85).data[0]),
                   0.85 * ln2))
    checks.append(("negative error at 0.5",
                   float(per_voxel_error(half, np.array([0.0]), 0.85).data[0]),
                   0.15 * ln2))

    shape = (4, 3, 4, 6)
    target = one_hot(np.random.default_rng(0).integers(0, 6, size=shape[:3]).astype(np.uint8), 6)
    flat_recon = reconstruction_loss(Tensor(np.full(shape, 0.5)), target, positive_weight=0.5)
    checks.append(("uniform-half reconstruction",
                   float(flat_recon.data), 0.5 * ln2 * np.prod(shape)))

    checks.append(("generator loss at 0.5",
                   float(adversarial_generator_loss(Tensor(np.array(0.5))).data), ln2))
    checks.append(("discriminator loss at (0.5, 0.5)",
                   float(adversarial_discriminator_loss(
                       Tensor(np.array(0.5)), Tensor(np.array(0.5))).data), 2.0 * ln2))

    unit = GaussianLatent(Tensor(np.array([1.0])), Tensor(np.array([0.0])))
    checks.append(("unit-mean KL", float(kl_divergence(unit).data), 0.5))
    centred = GaussianLatent(Tensor(np.array([0.0])), Tensor(np.array([0.0])))
    checks.append(("centred KL", float(kl_divergence(centred).data), 0.0))

    worst = 0.0
    for name, got, want in checks:
        delta = abs(got - want)
        assert delta <= 1e-12, f"{name}: |{got} - {want}| = {delta}"
        worst = max(worst, delta)

    prob = Tensor(np.random.default_rng(1).uniform(0.1, 0.9, size=shape))
    plain = reconstruction_loss(prob, target, positive_weight=0.85)
    collapsed = vae_loss(prob, target, unit, positive_weight=0.85, kl_weight=0.0)
    assert float(plain.data) == float(collapsed.data)

    report_line(3, "loss value oracles", True,
                f"{len(checks)} closed forms, worst |delta| {worst:.2e} (<= 1e-12), "
                "zero-weight ELBO == reconstruction bitwise")


# ---------------------------------------------------------------- 4 --


def test_criterion_4_overfit_smoke():
    started = time.perf_counter()
    arch = desk_scale()
    dataset = build_dataset(SceneConfig(extents=arch.volume_shape), arch.image_shape, 1, seed=0)
    hyper = HyperParams(
        batch_size=1,
        steps=500,
        learning_rate=1e-4,
        vae_weight=0.0,
        adversarial_volume_weight=0.0,
        adversarial_latent_weight=0.0,
        seed=0,
    )
    state = TrainState.create(arch, hyper)
    samples = prepare_samples(dataset, arch)
    records = train(state, samples)

    first, last = records[0].reconstruction, records[-1].reconstruction
    ratio = last / first
    depth, _ = samples[0]
    prob = state.models.generator.forward(state.models.depth_encoder.forward(depth)).data
    predicted = argmax_labels(prob)
    accuracy = float(np.mean(predicted.labels == dataset[0][1].labels))
    elapsed = time.perf_counter() - started

    ok = ratio < 0.05 and accuracy > 0.9 and elapsed < 600.0
    report_line(4, "overfit smoke", ok,
                f"loss {first:.1f} -> {last:.1f}, ratio {ratio:.4f} (< 0.05), "
                f"accuracy {accuracy:.4f} (> 0.9), {elapsed:.0f}s (< 600s)")
    assert ratio < 0.05
    assert accuracy > 0.9
    assert elapsed < 600.0


# ---------------------------------------------------------------- 5 --


def test_criterion_5_full_schedule_stability(tmp_path):
    started = time.perf_counter()
    arch = desk_scale()
    dataset = build_dataset(SceneConfig(extents=arch.volume_shape), arch.image_shape, 8, seed=0)
    hyper = HyperParams(batch_size=8, steps=200, seed=0)
    state = TrainState.create(arch, hyper)
    samples = prepare_samples(dataset, arch)
    log_path = tmp_path / "losses.jsonl"
    with open(log_path, "w") as fh:
        records = train(state, samples, log=fh)
    elapsed = time.perf_counter() - started

    assert len(records) == 200
    stages = ("reconstruction", "vae", "latent_alignment", "volume_realism",
              "volume_disc", "latent_disc")
    for record in records:
        for stage in stages:
            assert math.isfinite(getattr(record, stage)), f"{stage} at step {record.step}"

    logged = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert len(logged) == 200
    for row in logged:
        assert isinstance(row["volume_disc_updated"], bool)
        assert isinstance(row["latent_disc_updated"], bool)

    decisions = [r.volume_disc_updated for r in records] + [r.latent_disc_updated for r in records]
    updates = sum(decisions)
    assert True in decisions, "the update branch never ran"
    assert False in decisions, "the freeze branch never ran"

    report_line(5, "full-schedule stability", True,
                f"200 steps x 6 finite sub-losses, 400 gate decisions logged "
                f"({updates} updates, {len(decisions) - updates} freezes), {elapsed:.0f}s")


# ---------------------------------------------------------------- 6 --


def brute_iou(pred_labels, gt_labels, num_categories):
    """Per-category IoU by explicit coordinate-set enumeration."""
    values = []
    counts = []
    for c in range(num_categories):
        pred = {tuple(p) for p in np.argwhere(pred_labels == c)}
        gt = {tuple(p) for p in np.argwhere(gt_labels == c)}
        union = pred | gt
        values.append(len(pred & gt) / len(union) if union else math.nan)
        counts.append(len(gt))
    return values, counts


def brute_ap(scores, positives):
    """Average precision by walking the explicit ranking."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    precisions = []
    for rank, i in enumerate(order, start=1):
        if positives[i]:
            hits += 1
            precisions.append(hits / rank)
    return math.fsum(precisions) / len(precisions) if precisions else math.nan


def brute_weighted(values, counts):
    num = math.fsum(c * v for v, c in zip(values, counts) if not math.isnan(v))
    den = math.fsum(c for v, c in zip(values, counts) if not math.isnan(v))
    return num / den if den else math.nan


def same_value(a, b):
    return (math.isnan(a) and math.isnan(b)) or a == b


def test_criterion_6_metric_oracles():
    rng = np.random.default_rng(42)
    nc = 4

    for _ in range(100):
        pred = SemanticVolume(rng.integers(0, nc, size=(4, 4, 4)).astype(np.uint8), nc)
        gt = SemanticVolume(rng.integers(0, nc, size=(4, 4, 4)).astype(np.uint8), nc)
        inter, union, count = iou_counts(pred, gt)
        got = [inter[c] / union[c] if union[c] else math.nan for c in range(nc)]
        want, want_counts = brute_iou(pred.labels, gt.labels, nc)
        assert all(same_value(g, w) for g, w in zip(got, want))
        assert list(count) == want_counts

    for _ in range(100):
        scores = rng.uniform(size=27)
        scores[rng.integers(0, 27, size=5)] = scores[0]  # force ranking ties
        positives = rng.uniform(size=27) < 0.4
        got = average_precision(scores, positives)
        want = brute_ap(list(scores), list(positives))
        assert same_value(got, want)

    reports = 0
    for trial in range(20):
        pairs = []
        for _ in range(int(rng.integers(1, 4))):
            gt = SemanticVolume(rng.integers(0, nc, size=(4, 4, 4)).astype(np.uint8), nc)
            prob = rng.uniform(size=(4, 4, 4, nc))
            pairs.append((prob, gt))
        report = evaluate(pairs, nc)
        assert report.mean_iou == brute_weighted(list(report.iou), list(report.voxel_counts))
        assert report.mean_average_precision == brute_weighted(
            list(report.average_precision), list(report.voxel_counts))
        for value in list(report.iou) + list(report.average_precision):
            assert math.isnan(value) or 0.0 <= value <= 1.0
        reports += 1

    report_line(6, "metric oracles", True,
                f"100 IoU + 100 AP instances exactly equal brute force, "
                f"weighted-average identity on {reports} reports")


# ---------------------------------------------------------------- 7 --


def hash_tree(root):
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def test_criterion_7_protocol(tmp_path):
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 41))
        k = int(rng.integers(1, n + 1))
        seed = int(rng.integers(0, 2**31))
        folds = kfold_split(n, k, seed=seed)
        assert len(folds) == k
        everything = np.concatenate([test for _, test in folds])
        assert sorted(everything.tolist()) == list(range(n))
        sizes = [len(test) for _, test in folds]
        assert max(sizes) - min(sizes) <= 1
        for train_idx, test_idx in folds:
            assert sorted(set(train_idx) | set(test_idx)) == list(range(n))
            assert not set(train_idx) & set(test_idx)
        again = kfold_split(n, k, seed=seed)
        assert all(
            np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            for a, b in zip(folds, again)
        )

    config = ExperimentConfig(
        arch=tiny_scale(),
        hyper=HyperParams(steps=2, batch_size=2, seed=5),
        scene=SceneConfig(extents=(20, 12, 20)),
        run=RunConfig(sample_count=8, folds=2, data_seed=3, volume_supersample=2),
    )
    first_dir, second_dir = tmp_path / "first", tmp_path / "second"
    first_reports, first_mean = run_experiment(config, out_dir=first_dir)
    second_reports, second_mean = run_experiment(config, out_dir=second_dir)
    assert [r.to_json() for r in first_reports] == [r.to_json() for r in second_reports]
    assert first_mean.to_json() == second_mean.to_json()
    trees = (hash_tree(first_dir), hash_tree(second_dir))
    assert trees[0] == trees[1] and len(trees[0]) > 0

    report_line(7, "protocol", True,
                f"200 random k-fold triples hold all partition properties, "
                f"k=2 experiment bitwise identical across runs ({len(trees[0])} files)")


# ---------------------------------------------------------------- 8 --


def test_criterion_8_formats(tmp_path):
    rng = np.random.default_rng(8)

    depth_values = rng.uniform(0.1, 9.0, size=(13, 7)).astype(np.float32)
    depth_values[rng.uniform(size=(13, 7)) < 0.3] = np.nan
    depth = DepthImage(depth_values)
    depth_path = tmp_path / "depth.vsem"
    save_depth(depth_path, depth)
    loaded_depth = load_depth(depth_path)
    assert loaded_depth.values.dtype == np.float32
    assert np.array_equal(loaded_depth.values, depth.values, equal_nan=True)
    assert np.array_equal(loaded_depth.valid, ~np.isnan(depth_values))

    labels = rng.integers(0, 12, size=(6, 5, 4)).astype(np.uint8)
    volume = SemanticVolume(labels, 12)
    volume_path = tmp_path / "volume.vsem"
    save_volume(volume_path, volume)
    assert np.array_equal(load_volume(volume_path).labels, labels)

    dataset = Dataset([(depth, volume)], {"origin": "format-roundtrip"})
    save_dataset(tmp_path / "set", dataset)
    reloaded = load_dataset(tmp_path / "set")
    assert np.array_equal(reloaded[0][0].values, depth.values, equal_nan=True)
    assert np.array_equal(reloaded[0][1].labels, labels)
    assert reloaded.meta["origin"] == "format-roundtrip"

    good = depth_path.read_bytes()
    corrupt_path = tmp_path / "corrupt.vsem"
    corrupt_path.write_bytes(b"XXXX" + good[4:])
    try:
        load_depth(corrupt_path)
        raise AssertionError("bad magic must raise FormatError")
    except FormatError:
        pass
    truncated_path = tmp_path / "short.vsem"
    truncated_path.write_bytes(good[: len(good) // 2])
    try:
        load_depth(truncated_path)
        raise AssertionError("truncation must raise FormatError")
    except FormatError:
        pass

    models = build_models(micro_scale(), seed=11)
    hyper = HyperParams(batch_size=2)
    ckpt_path = tmp_path / "model.vsck"
    save_checkpoint(ckpt_path, models, hyper)
    loaded_models, loaded_hyper = load_checkpoint(ckpt_path)
    params = 0
    for net_name, param_set in models.named().items():
        other = loaded_models.named()[net_name]
        for name, tensor in param_set.items():
            assert tensor.data.tobytes() == other[name].data.tobytes(), f"{net_name}/{name}"
            params += 1
    assert loaded_hyper == hyper

    good_ckpt = ckpt_path.read_bytes()
    bad_ckpt = tmp_path / "bad.vsck"
    bad_ckpt.write_bytes(b"ZZZZ" + good_ckpt[4:])
    try:
        load_checkpoint(bad_ckpt)
        raise AssertionError("bad checkpoint magic must raise FormatError")
    except FormatError:
        pass
    short_ckpt = tmp_path / "short.vsck"
    short_ckpt.write_bytes(good_ckpt[:-20])
    try:
        load_checkpoint(short_ckpt)
        raise AssertionError("checkpoint truncation must raise FormatError")
    except FormatError:
        pass

    report_line(8, "formats", True,
                f"depth (with NaN mask), volume, dataset, and {params}-tensor checkpoint "
                "round-trip bitwise; corrupted magic and truncation raise format errors")
