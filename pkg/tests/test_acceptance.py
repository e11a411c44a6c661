"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that is printed in the pytest terminal summary (and to stdout with ``-s``)."""

import contextlib
import math
import time

import numpy as np
import pytest

from lodohar.cli import main
from lodohar.harness import STRATEGIES, RunConfig, cross_matrix, finetune, pretrain, run_lodo
from lodohar.nnc import (
    EXTRACTOR,
    HEAD,
    OptimizerState,
    ParamTree,
    adam_step,
    conv_ref,
    init_params,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from lodohar.nnc.network import layer_backward, layer_forward
from lodohar.pipeline import LabelSpace, apply_znorm, compute_stats, prepare, resample, window, window_stride
from lodohar.seeding import rng_for
from lodohar.splits import plan_all, plan_lodo
from lodohar.synth import SynthSpec, amplified, generate

from nnc_oracles import adam_reference, central_difference, rel_error
from test_nnc import _layer_case
from test_pipeline import TABLE_ACTIVITIES, TEN, _rec, brute_force_offsets

RESULTS = []


@contextlib.contextmanager
def criterion(n, title):
    """Record one PASS/FAIL line for criterion ``n``; the body fills ``info``."""
    info = {}
    t0 = time.perf_counter()
    ok = False
    try:
        yield info
        ok = True
    finally:
        detail = info.get("detail", "")
        line = (f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail} "
                f"({time.perf_counter() - t0:.1f}s)")
        RESULTS.append(line)
        print(line)


def test_criterion_1_label_union():
    with criterion(1, "label union gives the 10 canonical activities") as info:
        t0 = time.perf_counter()
        space = LabelSpace.default()
        union = set()
        for ds, labels in TABLE_ACTIVITIES.items():
            union |= space.map_labels(ds, labels)
        info["detail"] = f"{len(union)} labels"
        assert union == TEN
        assert time.perf_counter() - t0 < 1.0


def test_criterion_2_pipeline_arithmetic():
    with criterion(2, "window counts, z-norm stats, 100->50 Hz sine") as info:
        t0 = time.perf_counter()
        cases = 0
        for L in (64, 128, 256):
            for f in (0.0, 0.25, 0.5):
                S = window_stride(L, f)
                for M in range(0, 2001):
                    segs = [(0, M, "Walking")] if M > 0 else []
                    got = window(_rec(np.zeros((6, max(M, 1))), 50.0, segs), L, f).starts.tolist()
                    formula = (M - L) // S + 1 if M >= L else 0
                    assert got == brute_force_offsets(M, L, S), (M, L, f)
                    assert len(got) == formula, (M, L, f)
                    cases += 1

        rng = np.random.default_rng(0)
        recs = [_rec(rng.normal(3.0, 2.5, size=(6, n)), 50.0, subject=f"s{i}")
                for i, n in enumerate((300, 517, 1024))]
        stats = compute_stats(recs)
        Z = np.concatenate([apply_znorm(r, stats).channels for r in recs], axis=1).astype(np.float64)
        mean_err = np.abs(Z.mean(axis=1)).max()
        std_err = np.abs(Z.std(axis=1) - 1).max()
        assert mean_err < 1e-6 and std_err < 1e-6

        t = np.arange(1000) / 100.0
        out = resample(_rec(np.sin(2 * np.pi * 2.0 * t), 100.0), 50.0)
        ref = np.sin(2 * np.pi * 2.0 * np.arange(out.n_samples) / 50.0)
        sine_err = np.abs(out.channels[0] - ref)[2:-2].max()
        info["detail"] = (f"{cases} window cases, z-norm |mean| {mean_err:.1e} |std-1| {std_err:.1e}, "
                          f"sine error {sine_err:.4f}")
        assert sine_err < 0.01
        assert time.perf_counter() - t0 < 30


def test_criterion_3_gradients():
    with criterion(3, "finite-difference gradients, every layer and full ConvRef, 20 seeds") as info:
        t0 = time.perf_counter()
        worst_layer = 0.0
        for kind in ("conv1d", "relu", "maxpool1d", "gap", "dense", "dropout", "softmax"):
            for seed in range(20):
                rng = np.random.default_rng(seed)
                layer, xshape, pshapes = _layer_case(kind, rng)
                x = rng.normal(size=xshape)
                p = {k: rng.normal(size=s) for k, s in pshapes.items()}
                y0, cache = layer_forward(layer, p, x, True, rng_for(seed, "drop"))
                R = rng.normal(size=y0.shape)

                def loss():
                    return float(np.sum(layer_forward(layer, p, x, True, rng_for(seed, "drop"))[0] * R))

                dx, grads = layer_backward(layer, p, cache, R)
                for idx in np.ndindex(x.shape):
                    worst_layer = max(worst_layer, rel_error(central_difference(loss, x, idx), dx[idx]))
                for k, arr in p.items():
                    for idx in np.ndindex(arr.shape):
                        worst_layer = max(worst_layer, rel_error(central_difference(loss, arr, idx),
                                                                 grads[k][idx]))

        # the real ConvRef (128 x 6 input, 10 classes) in float64
        worst_net = 0.0
        arch = conv_ref(10)
        for seed in range(20):
            rng = np.random.default_rng(1000 + seed)
            params = init_params(arch, seed, np.float64)
            for k in params:
                if k.endswith(".b"):
                    params.arrays[k] = rng.normal(scale=0.1, size=params[k].shape)
            X = rng.normal(size=(2, 128, 6))
            y = rng.integers(0, 10, 2)
            _, grads = loss_and_grad(arch, params, X, y)

            def f():
                return loss_and_grad(arch, params, X, y)[0]

            for k, arr in params.items():
                flat = arr.reshape(-1)
                for j in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    idx = np.unravel_index(j, arr.shape)
                    worst_net = max(worst_net, rel_error(central_difference(f, arr, idx, h=1e-6),
                                                         grads[k][idx]))
        info["detail"] = f"max rel error layers {worst_layer:.1e}, ConvRef {worst_net:.1e}"
        assert worst_layer < 1e-4 and worst_net < 1e-4
        assert time.perf_counter() - t0 < 120


def _adam_trajectory(grad_fn, w0, steps=100):
    params = ParamTree({"w": np.array(w0, dtype=np.float64)}, {"w": HEAD})
    state = OptimizerState.for_params(params)
    traj = [params["w"].copy()]
    for _ in range(steps):
        adam_step(params, ParamTree({"w": grad_fn(params["w"])}, {"w": HEAD}), state)
        traj.append(params["w"].copy())
    return np.array(traj)


def test_criterion_4_adam_oracle():
    with criterion(4, "100 Adam steps vs reference") as info:
        scalar = lambda w: 2 * (w - 3.0)  # noqa: E731
        d1 = np.abs(_adam_trajectory(scalar, [1.0]) - adam_reference(scalar, [1.0], 100)).max()
        rng = np.random.default_rng(7)
        Q = rng.normal(size=(10, 10))
        A = Q @ Q.T / 10 + np.eye(10)
        b = rng.normal(size=10)
        quad = lambda w: A @ w - b  # noqa: E731
        w0 = rng.normal(size=10)
        d10 = np.abs(_adam_trajectory(quad, w0) - adam_reference(quad, w0, 100)).max()
        info["detail"] = f"max |diff| scalar {d1:.1e}, 10-dim {d10:.1e}"
        assert d1 < 1e-10 and d10 < 1e-10


def _violations(ws, plan):
    """Independent recount of every fold invariant; returns a list of strings."""
    out = []
    ds, keys, labels = ws.datasets, ws.subject_keys(), ws.labels
    held = plan.held_out_dataset_id
    if np.any(ds[plan.pretrain_train] == held) or np.any(ds[plan.pretrain_val] == held):
        out.append("exclusion")
    if not np.all(ds[plan.target] == held) or len(plan.target) != int(np.sum(ds == held)):
        out.append("target coverage")
    groups = [plan.pretrain_train, plan.pretrain_val]
    tgroups = [plan.target_test, plan.target_val, plan.target_train_pool]
    for gs in (groups, tgroups):
        for i in range(len(gs)):
            for j in range(i + 1, len(gs)):
                if set(keys[gs[i]]) & set(keys[gs[j]]):
                    out.append("subject overlap")
    pool = plan.target_train_pool
    prev = np.zeros(0, dtype=np.int64)
    for r in sorted(plan.ratio_subsets, key=float):
        sub = plan.ratio_subsets[r]
        ratio = float(r)
        if not (set(prev) <= set(sub) <= set(pool)):
            out.append(f"nesting {r}")
        if ratio == 0 and len(sub):
            out.append("ratio 0 not empty")
        if ratio == 1 and sorted(sub) != sorted(pool):
            out.append("ratio 1 not pool")
        for c in np.unique(labels[pool]):
            want = math.ceil(ratio * np.sum(labels[pool] == c) - 1e-9)
            if 0 < ratio < 1 and abs(int(np.sum(labels[sub] == c)) - want) > 1:
                out.append(f"stratification {r} class {c}")
        prev = sub
    return out


def test_criterion_5_protocol_hygiene():
    with criterion(5, "fold invariants over 50 random synthetic corpora") as info:
        rng = np.random.default_rng(2024)
        folds = 0
        bad = []
        for i in range(50):
            spec = SynthSpec(dataset_count=int(rng.integers(2, 6)), subjects_per_dataset=int(rng.integers(3, 11)),
                             segment_seconds=(4.0, 8.0), seed=int(rng.integers(2**31)))
            ws, _, _ = prepare(generate(spec))
            for plan in plan_all(ws, int(rng.integers(2**31))):
                folds += 1
                bad += [f"corpus {i} {plan.held_out_dataset_id}: {v}" for v in _violations(ws, plan)]
        info["detail"] = f"{folds} folds, {len(bad)} violations"
        assert not bad, bad[:5]


@pytest.fixture(scope="module")
def prepped(tmp_path_factory):
    root = tmp_path_factory.mktemp("acc6")
    assert main(["synth", "--out", str(root / "corpus"), "--datasets", "3", "--subjects", "5"]) == 0
    assert main(["prep", "--corpus", str(root / "corpus"), "--out", str(root / "prep")]) == 0
    return root


def test_criterion_6_strategy_contracts(prepped, tmp_path):
    with criterion(6, "PF freezes extractor, Rd ignores checkpoint, byte-identical CSVs") as info:
        from lodohar.pipeline import read_windows

        ws = read_windows(prepped / "prep" / "windows.harw")
        plan = plan_lodo(ws, "ds2", 0)
        ckpt = pretrain(plan, ws, RunConfig(phase="pretrain", epochs=3, out_dir=str(tmp_path)))
        _, src, meta = load_checkpoint(ckpt)
        ft = RunConfig(phase="finetune", strategy="PF", ratio=0.1, epochs=20, record_wall_time=False)
        model, _ = finetune(plan, ws, "PF", 0.1, ft, ckpt)
        frozen = all(model.params[k].tobytes() == src[k].tobytes() for k in model.params.names(EXTRACTOR))
        head_moved = any(model.params[k].tobytes() != src[k].tobytes()
                         for k in model.params.names(HEAD) if src[k].shape == model.params[k].shape)
        assert frozen

        other = tmp_path / "other.lodc"
        arch = load_checkpoint(ckpt)[0]
        save_checkpoint(other, arch, init_params(arch, 12345, np.float32), meta)
        rd = RunConfig(phase="finetune", strategy="Rd", ratio=0.1, epochs=3, record_wall_time=False)
        r1 = finetune(plan, ws, "Rd", 0.1, rd, ckpt)[1]
        r2 = finetune(plan, ws, "Rd", 0.1, rd, other)[1]
        assert r1 == r2

        base = ["run", "--all-folds", "--windows", str(prepped / "prep" / "windows.harw"), "--epochs", "2",
                "--ratios", "0,0.01,0.1", "--seeds", "0,1", "--no-wall-time"]
        outs = {}
        for name, extra in (("a", []), ("b", []), ("j4", ["--jobs", "4"])):
            assert main(base + ["--out", str(tmp_path / name)] + extra) == 0
            outs[name] = (tmp_path / name / "results.csv").read_bytes()
        same = outs["a"] == outs["b"] == outs["j4"]
        info["detail"] = (f"extractor frozen {frozen} (head updated {head_moved}), Rd equal {r1 == r2}, "
                          f"CSV identical across runs and --jobs 1/4 {same}")
        assert same


def test_criterion_7_trend(default_windows, tmp_path):
    with criterion(7, "LODO trend on default synthetic corpus, 5 seeds, 30 epochs") as info:
        t0 = time.perf_counter()
        ws = default_windows
        cfg = RunConfig(phase="pretrain", epochs=30, out_dir=str(tmp_path), record_wall_time=False)
        results = run_lodo(ws, (0.0, 0.01, 0.1), STRATEGIES, range(5), cfg)
        mean = {}
        for key in {(r.strategy, r.ratio) for r in results}:
            mean[key] = float(np.mean([r.macro_f1 for r in results if (r.strategy, r.ratio) == key]))
        n_shared = SynthSpec().n_shared
        gap = mean[("PU", 0.01)] - mean[("Rd", 0.01)]
        mono = {s: mean[(s, 0.1)] - mean[(s, 0.01)] for s in STRATEGIES}
        elapsed = time.perf_counter() - t0
        info["detail"] = (f"PU1% {mean[('PU', 0.01)]:.3f} - Rd1% {mean[('Rd', 0.01)]:.3f} = {gap:+.3f}; "
                          f"PU0% {mean[('PU', 0.0)]:.3f} vs 1/{n_shared}; "
                          + ", ".join(f"{s} 10%-1% {d:+.3f}" for s, d in mono.items())
                          + f"; {len(results)} runs")
        assert gap >= 0.05
        assert mean[("PU", 0.0)] > 1 / n_shared
        assert all(d >= -0.02 for d in mono.values())
        assert elapsed < 600


def test_criterion_8_cross_matrix():
    with criterion(8, "amplified-shift cross-dataset matrix, 3 seeds") as info:
        t0 = time.perf_counter()
        ws, _, _ = prepare(generate(amplified()))
        cfg = RunConfig(phase="finetune", strategy="Rd", ratio=1.0, epochs=30, record_wall_time=False)
        mats = []
        for s in range(3):
            M, datasets = cross_matrix(ws, cfg, s)
            mats.append(M)
        M = np.mean(mats, axis=0)
        D = len(datasets)
        margins = [M[i, i] - np.mean([M[i, j] for j in range(D) if j != i]) for i in range(D)]
        info["detail"] = "diag - off-diag row mean " + ", ".join(
            f"{d} {m:+.3f}" for d, m in zip(datasets, margins))
        assert min(margins) >= 0.10
        assert time.perf_counter() - t0 < 300
