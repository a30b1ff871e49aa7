"""Acceptance criteria, one test each. Every test records a PASS/FAIL line
that pytest prints in an "acceptance criteria" section at the end of the run
(``pytest tests/test_acceptance.py -s`` also prints them inline)."""

import json
import math
import time

import numpy as np
import pytest

from hqnoise.cli import main
from hqnoise.collector import CollectionConfig, align, align_to, collect_pair, moments
from hqnoise.config import WORKERS_ENV
from hqnoise.edn import (
    DESK_CHANNELS,
    MICRO_CHANNELS,
    EdnConfig,
    EdnModel,
    TrainConfig,
    evaluate_loss,
    linear_task_pairs,
    smooth_l1,
    smooth_l1_grad,
    train_edn,
)
from hqnoise.guidance import combine_cfg
from hqnoise.nn.gradcheck import numerical_gradient, relative_error
from hqnoise.pipeline import Scene, compare_modes, filter_pairs
from hqnoise.quality import filter_pair, format_rate
from hqnoise.scheduler import PredictionType, build_schedule, euler_step, invert_step
from hqnoise.testbed import two_component_world
from hqnoise.theory import random_trials

KINDS = (PredictionType.EPSILON, PredictionType.V_PREDICTION)


def test_roundtrip_exactness(acceptance):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for kind in KINDS:
        for _ in range(1000):
            sigma_t = float(np.exp(rng.uniform(np.log(0.002), np.log(700.0))))
            sigma_prev = float(rng.uniform(0.0, sigma_t))
            z = rng.standard_normal((4, 16, 16)) * math.sqrt(sigma_t**2 + 1.0)
            out = rng.standard_normal((4, 16, 16))
            back = invert_step(euler_step(z, out, sigma_t, sigma_prev, kind), out, sigma_t, sigma_prev, kind)
            worst = max(worst, np.max(np.abs(back - z)) / np.max(np.abs(z)))
    elapsed = time.perf_counter() - start
    ok = acceptance(
        "roundtrip exactness",
        worst < 1e-12 and elapsed < 1.0,
        f"2 kinds x 1000 tuples, worst relative error {worst:.2e} (< 1e-12), {elapsed:.2f}s (< 1s)",
    )
    assert ok


def test_appendix_identity(acceptance):
    start = time.perf_counter()
    reports = random_trials(500, np.random.default_rng(7), tol=1e-10)
    elapsed = time.perf_counter() - start
    worst = max(r.relative_deviation for r in reports)
    kinds = {r.kind for r in reports}
    ok = acceptance(
        "appendix identity",
        all(r.passed for r in reports) and kinds == {k.value for k in KINDS} and elapsed < 5.0,
        f"500 draws over {sorted(kinds)}, worst relative deviation {worst:.2e} (< 1e-10), "
        f"{elapsed:.2f}s (< 5s)",
    )
    assert ok


def test_reference_constants(acceptance):
    q = build_schedule(25, sigma_max=700.0).q
    rng = np.random.default_rng(0)
    mu_c, mu_u = rng.standard_normal((2, 4, 16, 16))
    exact = combine_cfg(mu_c, mu_u, 0.0).tobytes() == mu_u.tobytes()
    lr = TrainConfig().lr_at(400)
    ok = acceptance(
        "reference constants",
        abs(q - 700.0007) < 5e-5 and exact and abs(lr - 0.000192) < 1e-15,
        f"q={q:.7f} (700.0007 +- 5e-5), gamma2=0 path bitwise mu_uncond={exact}, lr(400)={lr:.9f}",
    )
    assert ok


def test_align_contract(acceptance):
    rng = np.random.default_rng(3)
    worst_target = 0.0
    worst_self = 0.0
    for _ in range(200):
        z = rng.standard_normal(rng.integers(2, 2000)) * rng.uniform(0.01, 700) + rng.uniform(-5, 5)
        m, s = rng.uniform(-100, 100), rng.uniform(0.01, 700)
        mu, sd = moments(align(z, m, s))
        worst_target = max(worst_target, abs(mu - m) / max(1.0, abs(m)), abs(sd - s) / max(1.0, s))
        worst_self = max(worst_self, np.max(np.abs(align_to(z, z) - z)) / max(1.0, np.max(np.abs(z))))
    example = align(np.array([1.0, 3.0]), 15.0, 5.0).tolist()
    ok = acceptance(
        "align contract",
        worst_target < 1e-9 and worst_self < 1e-12 and example == [10.0, 20.0],
        f"target moments {worst_target:.1e} (< 1e-9), self-align {worst_self:.1e} (< 1e-12), "
        f"[1,3] -> {example}",
    )
    assert ok


def test_gradient_correctness(acceptance):
    start = time.perf_counter()
    worst = 0.0
    checked = 0
    for upsample in ("pixel_shuffle", "transposed"):
        model = EdnModel(EdnConfig((4, 8, 8), MICRO_CHANNELS, upsample, seed=11))
        rng = np.random.default_rng(11)
        x = rng.standard_normal((4, 8, 8, 8))
        target = rng.standard_normal((4, 4, 8, 8)) * 0.5
        out = model.forward(x)
        model.zero_grad()
        model.backward(smooth_l1_grad(out, target))
        for p in model.parameters():
            k = max(2, p.value.size // 20)
            idx = rng.choice(p.value.size, size=min(k, p.value.size), replace=False)
            num = numerical_gradient(lambda: smooth_l1(model.forward(x), target), p.value, 1e-5, idx)
            worst = max(worst, relative_error(p.grad.reshape(-1)[idx], num.reshape(-1)[idx]))
            checked += idx.size
    elapsed = time.perf_counter() - start
    ok = acceptance(
        "gradient correctness",
        worst < 1e-5 and elapsed < 60.0,
        f"micro EDN, both upsamplers, {checked} sampled weights, worst per-tensor relative "
        f"error {worst:.2e} (< 1e-5), {elapsed:.1f}s (< 60s)",
    )
    assert ok


@pytest.mark.slow
def test_realizable_target_training(acceptance):
    pairs, _ = linear_task_pairs(count=64)
    model = EdnModel(EdnConfig(channels=(32, 32, 64), seed=0))
    start = time.perf_counter()
    initial = evaluate_loss(model, pairs)
    result = train_edn(pairs, model, TrainConfig(lr=1e-3, epochs=600, batch_size=8, seed=0))
    elapsed = time.perf_counter() - start
    final = result.losses[-1]
    ratio = final / initial
    ok = acceptance(
        "realizable-target training",
        ratio < 0.01 and elapsed < 600.0,
        f"64 pairs, 600 epochs, final/initial loss {ratio:.2%} (< 1%), "
        f"held in inference mode {evaluate_loss(model, pairs) / initial:.2%}, {elapsed:.0f}s (< 600s)",
    )
    assert ok


E2E_TRAIN_SEEDS = range(10001, 10065)
E2E_TEST_SEEDS = range(1, 201)
E2E_EPOCHS = 150


@pytest.mark.slow
def test_end_to_end_improvement(acceptance):
    start = time.perf_counter()
    world = two_component_world(num_views=6, view_shift=1)
    schedule = build_schedule(25)
    scene = Scene(world, CollectionConfig(n=16), schedule)
    train = [collect_pair(s, world, scene.config, schedule) for s in E2E_TRAIN_SEEDS]
    kept, _ = filter_pairs(train, 0.0, scene)
    model = EdnModel(EdnConfig(channels=DESK_CHANNELS, scale=schedule.q, seed=0))
    train_edn(kept, model, TrainConfig(epochs=E2E_EPOCHS, seed=0))
    cmp = compare_modes(scene, E2E_TEST_SEEDS, model)
    elapsed = time.perf_counter() - start
    std, inv, edn = (cmp.mean(m) for m in ("standard", "inversion", "with-edn"))
    p = cmp.sign_test("with-edn")
    acceptance(
        "end-to-end (table rows)",
        True,
        f"mean proxy standard {std:.5f} | inversion {inv:.5f} "
        f"({cmp.wins('inversion')}/200 better) | with-edn {edn:.5f} "
        f"({cmp.wins('with-edn')}/200 better); trained on {len(kept)}/{len(train)} filtered pairs",
    )
    ok = acceptance(
        "end-to-end improvement",
        edn < std and p < 0.05 and elapsed < 1800.0,
        f"with-edn {edn:.5f} < standard {std:.5f}, sign test p={p:.2e} (< 0.05), "
        f"{elapsed / 60:.1f} min (< 30)",
    )
    assert ok


def test_filter_semantics(acceptance):
    boundary = (
        filter_pair(0.5, 0.3, 0.0)
        and not filter_pair(0.3, 0.3, 0.0)
        and not filter_pair(0.75, 0.5, 0.25)
        and filter_pair(np.nextafter(0.75, 1.0), 0.5, 0.25)
    )
    rate = format_rate(359, 1765)
    ok = acceptance(
        "filter semantics",
        boundary and rate == "20.34%",
        f"strict inequality at s_rd == s_hq + m holds={boundary}, 359/1765 -> {rate}",
    )
    assert ok


def test_determinism(acceptance, tmp_path, monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({
        "master_seed": 5,
        "collection": {"seeds": [1, 8]},
        "world": two_component_world(num_views=2, view_shift=1).to_dict(),
        "edn": {"channels": list(MICRO_CHANNELS)},
        "train": {"epochs": 30, "batch_size": 4},
    }))
    runs = {}
    for name, workers in (("serial", "1"), ("rerun", "1"), ("parallel", "4")):
        out = tmp_path / name
        base = ["--config", str(cfg), "--out", str(out), "--workers", workers]
        assert main(base + ["collect"]) == 0
        assert main(base + ["train", "--input", str(out / "pairs.ednp")]) == 0
        runs[name] = ((out / "pairs.ednp").read_bytes(), (out / "train_loss.csv").read_bytes())
    same = all(runs[n] == runs["serial"] for n in runs)
    ok = acceptance(
        "determinism",
        same,
        f"pairs file and training CSV byte-identical across serial, rerun and 4 workers: {same}",
    )
    assert ok
