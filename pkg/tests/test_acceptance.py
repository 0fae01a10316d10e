"""Acceptance checks for the package's headline guarantees.

Each test exercises one promised behavior end to end and prints a single
PASS or FAIL line with the measured numbers (run with -s to see the line
on success too). These overlap the unit suites on purpose: the unit tests
pin down individual functions, the checks here gate the claims the README
makes, at the stated tolerances, in one place.

The training check alone takes a few minutes of CPU; run this file last.
"""

import time

import numpy as np

from mmfusion.feature_io import (
    load_checkpoint,
    read_features,
    save_checkpoint,
    synth_generate,
    write_features,
)
from mmfusion.gradcheck import check_model_gradients
from mmfusion.model import (
    CONCAT_WIDTH,
    CONV_FILTERS,
    D,
    GLOBAL_DIM,
    N_REGIONS,
    REGION_DIM,
    SEQ_LEN,
    T_M_ROWS,
    TEXT_DIM,
    SampleFeatures,
    attention_block,
    forward,
    init_params,
)
from mmfusion.tensor import (
    RngStream,
    Tensor,
    affine,
    bmm,
    clip,
    concat,
    conv1d_same,
    dropout,
    elementwise_max,
    finite_difference_check,
    layer_norm,
    linear,
    log,
    matmul,
    maxpool1d,
    mul,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    residual_add,
    sigmoid,
    softmax_rows,
)
from mmfusion.training import (
    AdamState,
    MetricsReport,
    TrainConfig,
    adam_step,
    evaluate,
    history_to_text,
    train,
)


def _verdict(label: str, ok: bool, detail: str):
    print(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, f"{label}: {detail}"


def test_forward_shape_contract():
    params = init_params(0)
    assert CONCAT_WIDTH == 160
    assert params["comb.fc.w"].shape == (CONCAT_WIDTH, D)
    for seed in (0, 1, 2):
        rng = RngStream(seed).derive("acceptance/shapes")
        sample = SampleFeatures(
            id=seed,
            tokens=rng.normal((SEQ_LEN, TEXT_DIM)).astype(np.float32),
            image_global=rng.normal((GLOBAL_DIM,)).astype(np.float32),
            image_regions=rng.normal((N_REGIONS, REGION_DIM)).astype(np.float32),
            label=seed % 2,
        )
        trace = forward(sample, params)
        got = {
            "T_m": trace.T_m.shape,
            "T_f": trace.T_f.shape,
            "I_f": trace.I_f.shape,
            "I_m": trace.I_m.shape,
            "R_TI": trace.R_TI.shape,
            "R_IT": trace.R_IT.shape,
            "R_II": trace.R_II.shape,
            "att_t2i": trace.att_t2i.shape,
            "att_i2t": trace.att_i2t.shape,
            "att_ii": trace.att_ii.shape,
        }
        want = {
            "T_m": (T_M_ROWS, CONV_FILTERS),
            "T_f": (D,),
            "I_f": (D,),
            "I_m": (N_REGIONS, D),
            "R_TI": (D,),
            "R_IT": (D,),
            "R_II": (N_REGIONS, D),
            "att_t2i": (1, N_REGIONS),
            "att_i2t": (1, T_M_ROWS),
            "att_ii": (N_REGIONS, N_REGIONS),
        }
        assert got == want, f"seed {seed}: {got}"
        assert 0.0 < trace.probability < 1.0
    _verdict(
        "shape contract",
        True,
        f"T_m {T_M_ROWS}x{CONV_FILTERS}, fused width {CONCAT_WIDTH}, "
        f"maps 1x{N_REGIONS} / 1x{T_M_ROWS} / {N_REGIONS}x{N_REGIONS}",
    )


def test_confusion_fixture_reproduces_expected_scores():
    tp, fp, tn, fn = 1006, 231, 618, 145
    rep = MetricsReport.from_counts(tp=tp, fp=fp, tn=tn, fn=fn)

    f1_err = abs(rep.fake_f1 - 0.843)
    ok = f1_err <= 0.001
    ok &= round(rep.fake_precision, 3) == 0.813
    ok &= round(rep.fake_recall, 3) == 0.874
    ok &= round(rep.accuracy, 3) == 0.812

    # every derived field must follow from the counts
    total = tp + fp + tn + fn
    ok &= rep.accuracy == (tp + tn) / total
    p, r = tp / (tp + fp), tp / (tp + fn)
    ok &= abs(rep.fake_f1 - 2 * p * r / (p + r)) < 1e-12
    ok &= rep.real_precision == tn / (tn + fn)
    ok &= rep.real_recall == tn / (tn + fp)
    ok &= round(rep.real_precision, 3) == 0.810
    ok &= round(rep.real_recall, 3) == 0.728
    ok &= round(rep.real_f1, 3) == 0.767

    _verdict(
        "metrics fixture",
        bool(ok),
        f"fake F1 {rep.fake_f1:.4f} (|err| {f1_err:.1e} vs 0.843 +/- 0.001), "
        f"accuracy {rep.accuracy:.3f}",
    )


def test_adam_first_step_magnitude_equals_learning_rate():
    params = init_params(0)
    before = params.copy()
    cfg = TrainConfig(learning_rate=3e-4)
    for _, t in params.items():
        t.grad = np.ones_like(t.data)
    adam_step(params, AdamState(params), cfg)

    worst = 0.0
    for name, t in params.items():
        delta = before[name].data.astype(np.float64) - t.data.astype(np.float64)
        worst = max(worst, float(np.abs(delta - cfg.learning_rate).max()))
    rel = worst / cfg.learning_rate
    _verdict(
        "adam first step",
        rel < 0.01,
        f"|step - lr| / lr at most {rel:.2e} for unit gradient (lr {cfg.learning_rate})",
    )


def test_identical_seeds_give_bit_identical_artifacts(tmp_path):
    data = list(synth_generate(3, 8, 3.0))
    cfg = TrainConfig(epochs=2, batch_size=4, seed=11)
    ckpt_bytes, histories, param_sets = [], [], []
    for run in range(2):
        params, history = train(data, cfg)
        path = tmp_path / f"run{run}.mmck"
        save_checkpoint(str(path), params)
        ckpt_bytes.append(path.read_bytes())
        histories.append(history_to_text(history))
        param_sets.append(params)
    ok = ckpt_bytes[0] == ckpt_bytes[1]
    ok &= histories[0] == histories[1]

    # feature file roundtrip, bit for bit
    ffile = tmp_path / "roundtrip.mmff"
    write_features(str(ffile), data)
    back = list(read_features(str(ffile)))
    ok &= len(back) == len(data)
    for orig, got in zip(data, back):
        ok &= got.id == orig.id and got.label == orig.label
        ok &= np.array_equal(got.tokens, orig.tokens)
        ok &= np.array_equal(got.image_global, orig.image_global)
        ok &= np.array_equal(got.image_regions, orig.image_regions)

    # checkpoint roundtrip, bit for bit
    loaded = load_checkpoint(str(tmp_path / "run0.mmck"))
    for name, t in param_sets[0].items():
        ok &= np.array_equal(loaded[name].data, t.data)

    _verdict(
        "determinism",
        bool(ok),
        f"two seeded runs: checkpoints equal={ckpt_bytes[0] == ckpt_bytes[1]}, "
        f"histories equal={histories[0] == histories[1]}, roundtrips bit-exact",
    )


def test_attention_weight_invariants():
    n_per_block = 1000
    n_param_seeds = 10
    worst_rowsum = 0.0
    worst_cross = 0.0
    worst_self = 0.0

    def rowsum_err(weights: Tensor) -> float:
        sums = weights.data.astype(np.float64).sum(axis=1)
        return float(np.abs(sums - 1.0).max())

    for ps in range(n_param_seeds):
        params = init_params(ps)
        rng = RngStream(ps).derive("acceptance/attention")
        for _ in range(n_per_block // n_param_seeds):
            # text queries image regions
            q = rng.normal((1, D)).astype(np.float32)
            kv = rng.normal((N_REGIONS, D)).astype(np.float32)
            out = attention_block(q, kv, params, "att_t2i")
            worst_rowsum = max(worst_rowsum, rowsum_err(out.weights))
            perm = rng.permutation(N_REGIONS)
            out_p = attention_block(q, kv[perm], params, "att_t2i")
            worst_cross = max(
                worst_cross, float(np.abs(out_p.fused.data - out.fused.data).max())
            )

            # image queries token windows
            q = rng.normal((1, D)).astype(np.float32)
            kv = rng.normal((T_M_ROWS, CONV_FILTERS)).astype(np.float32)
            out = attention_block(q, kv, params, "att_i2t")
            worst_rowsum = max(worst_rowsum, rowsum_err(out.weights))
            perm = rng.permutation(T_M_ROWS)
            out_p = attention_block(q, kv[perm], params, "att_i2t")
            worst_cross = max(
                worst_cross, float(np.abs(out_p.fused.data - out.fused.data).max())
            )

            # regions attend to themselves: permuting rows permutes outputs
            x = rng.normal((N_REGIONS, D)).astype(np.float32)
            out = attention_block(x, x, params, "att_i2i")
            worst_rowsum = max(worst_rowsum, rowsum_err(out.weights))
            perm = rng.permutation(N_REGIONS)
            out_p = attention_block(x[perm], x[perm], params, "att_i2i")
            worst_self = max(
                worst_self, float(np.abs(out_p.fused.data - out.fused.data[perm]).max())
            )

    _verdict(
        "attention invariants",
        worst_rowsum < 1e-6 and worst_cross < 1e-5 and worst_self < 1e-5,
        f"{n_per_block} instances per block: row sums off by {worst_rowsum:.2e} "
        f"(tol 1e-6), kv-permutation drift {worst_cross:.2e}, "
        f"self-permutation drift {worst_self:.2e} (tol 1e-5)",
    )


def _primitive_checks(seed: int, dtype):
    """(label, objective, input) triples covering every differentiable op.

    Objectives keep every coordinate's gradient O(1) by mixing in a scaled
    reduce_sum of the probed tensor; without it, coordinates whose gradient
    is tiny drown in central-difference roundoff and the comparison stops
    measuring the backward pass. Kinked ops get inputs nudged off their
    kinks so the two one-sided slopes agree.
    """
    rng = RngStream(seed).derive("acceptance/primitives")

    def t(shape, scale=1.0):
        return Tensor(rng.normal(shape, scale=scale).astype(dtype))

    def off_kink(arr, threshold=1e-3, push=0.05):
        return np.where(np.abs(arr) < threshold, arr + push, arr)

    def cond(head, v):
        return residual_add(head, affine(reduce_sum(v), 2.0))

    checks = []

    a0, b0, c0 = t((4, 5)), t((5, 3)), t((4, 3))
    checks.append(("matmul/a", lambda v, b=b0, c=c0: cond(reduce_sum(mul(matmul(v, b), c)), v), a0))
    checks.append(("matmul/b", lambda v, a=a0, c=c0: cond(reduce_sum(mul(matmul(a, v), c)), v), b0))

    tb = bool(seed % 2)
    ba, bb = t((2, 3, 4)), t((2, 5, 4)) if tb else t((2, 4, 5))
    bc = t((2, 3, 5))
    checks.append(
        ("bmm/a", lambda v, b=bb, c=bc, f=tb: cond(reduce_sum(mul(bmm(v, b, transpose_b=f), c)), v), ba)
    )
    checks.append(
        ("bmm/b", lambda v, a=ba, c=bc, f=tb: cond(reduce_sum(mul(bmm(a, v, transpose_b=f), c)), v), bb)
    )

    lx, lw, lb, lc = t((3, 6)), t((6, 4)), t((4,)), t((3, 4))
    checks.append(("linear/x", lambda v, w=lw, b=lb, c=lc: cond(reduce_sum(mul(linear(v, w, b), c)), v), lx))
    checks.append(("linear/w", lambda v, x=lx, b=lb, c=lc: cond(reduce_sum(mul(linear(x, v, b), c)), v), lw))
    checks.append(("linear/b", lambda v, x=lx, w=lw, c=lc: cond(reduce_sum(mul(linear(x, w, v), c)), v), lb))

    cx, ck, cb, cc = t((2, 6, 3)), t((3, 3, 4), scale=0.5), t((4,)), t((2, 6, 4))
    checks.append(
        ("conv1d_same/x", lambda v, k=ck, b=cb, c=cc: cond(reduce_sum(mul(conv1d_same(v, k, b), c)), v), cx)
    )
    checks.append(
        ("conv1d_same/k", lambda v, x=cx, b=cb, c=cc: cond(reduce_sum(mul(conv1d_same(x, v, b), c)), v), ck)
    )
    checks.append(
        ("conv1d_same/b", lambda v, x=cx, k=ck, c=cc: cond(reduce_sum(mul(conv1d_same(x, k, v), c)), v), cb)
    )

    px, pc = t((2, 7, 3)), t((2, 2, 3))
    checks.append(("maxpool1d", lambda v, c=pc: cond(reduce_sum(mul(maxpool1d(v), c)), v), px))

    sx, sc = t((4, 6)), t((4, 6))
    checks.append(("softmax_rows", lambda v, c=sc: cond(reduce_sum(mul(softmax_rows(v), c)), v), sx))

    nx, ng, nb, nc = t((3, 8)), t((8,), scale=0.5), t((8,), scale=0.5), t((3, 8))
    checks.append(("layer_norm/x", lambda v, g=ng, b=nb, c=nc: cond(reduce_sum(mul(layer_norm(v, g, b), c)), v), nx))
    checks.append(("layer_norm/gain", lambda v, x=nx, b=nb, c=nc: cond(reduce_sum(mul(layer_norm(x, v, b), c)), v), ng))
    checks.append(("layer_norm/bias", lambda v, x=nx, g=ng, c=nc: cond(reduce_sum(mul(layer_norm(x, g, v), c)), v), nb))

    rx = Tensor(off_kink(rng.normal((4, 6))).astype(dtype))
    rc = t((4, 6))
    checks.append(("relu", lambda v, c=rc: cond(reduce_sum(mul(relu(v), c)), v), rx))

    gx, gc = t((4, 6)), t((4, 6))
    checks.append(("sigmoid", lambda v, c=gc: cond(reduce_sum(mul(sigmoid(v), c)), v), gx))

    dx, dc = t((4, 6)), t((4, 6))
    checks.append(
        (
            "dropout",
            lambda v, c=dc, s=seed: cond(
                reduce_sum(mul(dropout(v, 0.4, True, RngStream(s).derive("acceptance/mask")), c)), v
            ),
            dx,
        )
    )

    others = [t((3, 4)) for _ in range(3)]
    mc = t((3, 4))
    pos = seed % 4
    checks.append(
        (
            "elementwise_max",
            lambda v, o=others, c=mc, i=pos: cond(
                reduce_sum(mul(elementwise_max(o[:i] + [v] + o[i:]), c)), v
            ),
            t((3, 4)),
        )
    )

    ax, ay, ac = t((3, 4)), t((3, 4)), t((3, 4))
    checks.append(("residual_add/x", lambda v, y=ay, c=ac: cond(reduce_sum(mul(residual_add(v, y), c)), v), ax))
    checks.append(("residual_add/y", lambda v, x=ax, c=ac: cond(reduce_sum(mul(residual_add(x, v), c)), v), ay))

    mx, my, mc2 = t((3, 4)), t((3, 4)), t((3, 4))
    checks.append(("mul/x", lambda v, y=my, c=mc2: cond(reduce_sum(mul(mul(v, y), c)), v), mx))
    checks.append(("mul/y", lambda v, x=mx, c=mc2: cond(reduce_sum(mul(mul(x, v), c)), v), my))

    fx, fc = t((3, 4)), t((3, 4))
    checks.append(("affine", lambda v, c=fc: cond(reduce_sum(mul(affine(v, 1.7, -0.3), c)), v), fx))

    ox = Tensor((np.abs(rng.normal((3, 4))) + 0.5).astype(dtype))
    oc = t((3, 4))
    checks.append(("log", lambda v, c=oc: cond(reduce_sum(mul(log(v), c)), v), ox))

    raw = rng.normal((3, 5))
    near = np.abs(np.abs(raw) - 0.6) < 1e-3
    qx = Tensor(np.where(near, raw + np.sign(raw) * 0.05, raw).astype(dtype))
    qc = t((3, 5))
    checks.append(("clip", lambda v, c=qc: cond(reduce_sum(mul(clip(v, -0.6, 0.6), c)), v), qx))

    axis = seed % 2
    if axis == 0:
        parts, full = [t((2, 3)), t((3, 3))], t((5, 3))
    else:
        parts, full = [t((2, 2)), t((2, 3))], t((2, 5))
    part_i = seed % 2
    checks.append(
        (
            "concat",
            lambda v, p=parts, c=full, ax=axis, i=part_i: cond(
                reduce_sum(mul(concat(p[:i] + [v] + p[i + 1 :], axis=ax), c)), v
            ),
            t(parts[part_i].shape),
        )
    )

    hx, hc = t((2, 6)), t((3, 4))
    checks.append(("reshape", lambda v, c=hc: cond(reduce_sum(mul(reshape(v, (3, 4)), c)), v), hx))

    checks.append(("reduce_sum", lambda v: affine(reduce_sum(v), 1.3), t((3, 4))))
    checks.append(("reduce_mean", lambda v: affine(reduce_mean(v), 5.0), t((3, 4))))

    return checks


def test_gradients_match_finite_differences():
    t0 = time.perf_counter()
    n_seeds = 20

    worst64, worst64_at = 0.0, ""
    worst32, worst32_at = 0.0, ""
    for seed in range(n_seeds):
        for label, f, x0 in _primitive_checks(seed, np.float64):
            err = finite_difference_check(f, x0)
            if err > worst64:
                worst64, worst64_at = err, f"{label} seed {seed}"
        for label, f, x0 in _primitive_checks(seed, np.float32):
            err = finite_difference_check(f, x0)
            if err > worst32:
                worst32, worst32_at = err, f"{label} seed {seed}"

    # 6 coordinates per seed keeps the whole audit inside the two-minute
    # budget on one core; the rotation still visits all 73 tensors
    report = check_model_gradients(n_seeds=n_seeds, coords_per_seed=6)
    elapsed = time.perf_counter() - t0
    if report.worst_double > worst64:
        worst64, worst64_at = report.worst_double, "full model"
    if report.worst_single > worst32:
        worst32, worst32_at = report.worst_single, "full model"

    _verdict(
        "gradient integrity",
        worst64 < 1e-5 and worst32 < 1e-3 and elapsed < 120.0,
        f"worst rel err float64 {worst64:.2e} ({worst64_at}, tol 1e-5), "
        f"float32 {worst32:.2e} ({worst32_at}, tol 1e-3), "
        f"{n_seeds} seeds in {elapsed:.1f}s (budget 120s)",
    )


def test_synthetic_training_reaches_accuracy_targets():
    t0 = time.perf_counter()
    train_set = list(synth_generate(0, 128, 4.0))
    params, history = train(train_set, TrainConfig(epochs=50))
    train_acc = evaluate(params, train_set).accuracy
    overfit_s = time.perf_counter() - t0

    gen_params, _ = train(list(synth_generate(0, 512, 2.0)), TrainConfig())
    test_acc = evaluate(gen_params, list(synth_generate(1, 256, 2.0))).accuracy

    _verdict(
        "synthetic training",
        train_acc >= 0.98 and overfit_s < 300.0 and test_acc >= 0.90,
        f"overfit 128@sep4: train accuracy {train_acc:.3f} (>=0.98) in "
        f"{overfit_s:.0f}s (budget 300s); generalization 512/256@sep2: "
        f"test accuracy {test_acc:.3f} (>=0.90)",
    )
