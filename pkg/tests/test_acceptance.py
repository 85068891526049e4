"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line
(run with ``pytest tests/test_acceptance.py -s`` to see them live).

Criteria that train models pin their full configuration here, including the
runtime budget they must respect.
"""

import time
from contextlib import contextmanager

import numpy as np

from scourwatch import cli
from scourwatch.dataset import WindowSet, WindowSpec, window_count
from scourwatch.earlywarn import (
    SurrogateConstants,
    P_EXPONENT,
    band,
    exceedance,
    hec18_surrogate,
    scour_error_percent,
)
from scourwatch.harness import GridSpec, run_grid, run_one
from scourwatch.neural.models import (
    ModelConfig,
    build_model,
    loss_and_metrics,
    loss_gradient,
)
from scourwatch.neural.snapshot import save_model
from scourwatch.neural.train import train
from scourwatch.neural import optim
from scourwatch.preprocess import ImputeSpec, impute


@contextmanager
def criterion(number: int, description: str):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"CRITERION {number:2d} FAIL  {description}")
        raise
    print(f"CRITERION {number:2d} PASS  {description} "
          f"({time.perf_counter() - t0:.1f}s)")


def test_criterion_01_gradient_correctness():
    with criterion(1, "analytic gradients match finite differences (ss, fd, ss2)"):
        t0 = time.perf_counter()
        rng = np.random.default_rng(5)
        h = 1e-5
        for variant in ("ss", "fd", "ss2"):
            cfg = ModelConfig(variant=variant, input_width=8, label_width=2,
                              units=4, seed=2)
            model = build_model(cfg, 2, rng=np.random.default_rng(11))
            X = rng.normal(size=(3, 8, 2))
            Y = rng.normal(size=(3, 2, 2))
            pred = model.forward(X, training=False)
            grads = model.backward(loss_gradient(pred, Y))

            def loss():
                return loss_and_metrics(model.forward(X, training=False), Y)[0]

            for name, p in model.params.items():
                flat = p.ravel()
                g = grads[name].ravel()
                for k in range(flat.size):
                    orig = flat[k]
                    flat[k] = orig + h
                    lp = loss()
                    flat[k] = orig - h
                    lm = loss()
                    flat[k] = orig
                    numeric = (lp - lm) / (2 * h)
                    rel = abs(g[k] - numeric) / max(1.0, abs(g[k]))
                    assert rel < 1e-4, f"{variant} {name}[{k}]: rel err {rel}"
        assert time.perf_counter() - t0 < 30.0


def test_criterion_02_model_ordering(small_factory):
    with criterion(2, "test sonar MAE: LSTM(ss) < Dense < Baseline, gaps >= 5%"):
        t0 = time.perf_counter()
        from scourwatch.neural.train import evaluate

        spec = WindowSpec(336, 168)
        ws = small_factory.windows("ss", spec)
        train_sub = WindowSet("train", spec, ws["train"].matrix,
                              ws["train"].entries[::4])
        mae = {}
        for variant, epochs in (("baseline", 1), ("dense", 40), ("ss", 16)):
            cfg = ModelConfig(variant=variant, input_width=336, label_width=168,
                              units=32, seed=0, learning_rate=1e-3,
                              max_epochs=epochs, patience=4)
            trained = train(cfg, train_sub, ws["validation"])
            _, m = evaluate(trained.build(), ws["test"])
            mae[variant] = float(m[0])
        print(f"  baseline {mae['baseline']:.4f}  dense {mae['dense']:.4f}  "
              f"lstm-ss {mae['ss']:.4f}")
        assert mae["ss"] < 0.95 * mae["dense"]
        assert mae["dense"] < 0.95 * mae["baseline"]
        assert time.perf_counter() - t0 < 600.0


def test_criterion_03_scour_error_formula():
    with criterion(3, "published scour-error percentages reproduced"):
        assert abs(scour_error_percent(0.19, 2.1) - 9.0) <= 0.5
        assert abs(scour_error_percent(0.25, 3.3) - 7.6) <= 0.5
        assert abs(scour_error_percent(0.37, 1.5) - 24.7) <= 0.5


def test_criterion_04_window_arithmetic():
    with criterion(4, "window counts match exhaustive enumeration"):
        rng = np.random.default_rng(3)
        cases = [(8760, 336, 168), (8760, 720, 168), (8760, 720, 336)]
        while len(cases) < 53:
            cases.append(
                (int(rng.integers(1, 3000)), int(rng.integers(1, 800)),
                 int(rng.integers(1, 800)))
            )
        for length, in_w, out_w in cases:
            spec = WindowSpec(in_w, out_w)
            brute = sum(1 for s in range(length) if s + in_w + out_w <= length)
            assert window_count(length, spec) == brute


def test_criterion_05_early_stopping_trace(small_factory):
    with criterion(5, "patience-5 schedule stops at epoch 7, restores epoch 2"):
        schedule = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95]
        spec = WindowSpec(24, 6)
        ws = small_factory.windows("ss", spec)
        train_ws = WindowSet("train", spec, ws["train"].matrix,
                             ws["train"].entries[:20])
        val_ws = WindowSet("validation", spec, ws["validation"].matrix,
                           ws["validation"].entries[:8])
        captured = {}
        trained = train(
            ModelConfig(variant="ss", input_width=24, label_width=6, units=4,
                        max_epochs=100, patience=5, seed=1),
            train_ws,
            val_ws,
            val_loss_override=lambda epoch: schedule[epoch - 1],
            epoch_callback=lambda e, params, s: captured.__setitem__(
                e, {k: v.copy() for k, v in params.items()}
            ),
        )
        assert trained.stopped_epoch == 7
        assert trained.restored_epoch == 2
        for name, tensor in trained.params.items():
            np.testing.assert_array_equal(tensor, captured[2][name])


def test_criterion_06_surrogate_solver():
    with criterion(6, "fixed-point solver: exact unit root, residuals, monotone"):
        t0 = time.perf_counter()
        assert hec18_surrogate(SurrogateConstants(eta=1.0), 2.0, 0.0) == 1.0
        rng = np.random.default_rng(0)
        for _ in range(100):
            eta = float(rng.uniform(0.05, 5.0))
            d = float(rng.uniform(0.1, 10.0))
            y = hec18_surrogate(SurrogateConstants(eta=eta), d, 0.0)
            assert abs(y - eta * (d - y) ** P_EXPONENT) < 1e-10
        for d in (1.0, 3.0, 7.0):
            ys = [hec18_surrogate(SurrogateConstants(eta=e), d, 0.0)
                  for e in np.linspace(0.1, 4.0, 9)]
            assert all(a < b for a, b in zip(ys, ys[1:]))
        for eta in (0.3, 1.0, 2.5):
            ys = [hec18_surrogate(SurrogateConstants(eta=eta), d, 0.0)
                  for d in np.linspace(0.5, 9.0, 9)]
            assert all(a < b for a, b in zip(ys, ys[1:]))
        assert time.perf_counter() - t0 < 1.0


def test_criterion_07_overfit_capacity(small_factory):
    with criterion(7, "ss variant memorizes 10 sequences to MSE < 1e-3"):
        t0 = time.perf_counter()
        spec = WindowSpec(24, 8)
        ws = small_factory.windows("ss", spec)
        subset = WindowSet("train", spec, ws["train"].matrix,
                           ws["train"].entries[::450][:10])
        assert len(subset) == 10
        X, Y, _ = subset.materialize()
        cfg = ModelConfig(variant="ss", input_width=24, label_width=8, units=32,
                          seed=0, learning_rate=1e-2)
        model = build_model(cfg, 2, rng=np.random.default_rng(0))
        opt = optim.make_optimizer(cfg.optimizer, cfg.learning_rate)
        final = np.inf
        for epoch in range(500):  # early stopping disabled for this check
            pred = model.forward(X, training=True, rng=np.random.default_rng(1))
            final, _ = loss_and_metrics(pred, Y)
            if final < 1e-3:
                break
            grads = model.backward(loss_gradient(pred, Y))
            optim.clip_global_norm(grads, cfg.clip_norm)
            opt.step(model.params, grads)
        assert final < 1e-3, f"stuck at MSE {final:.2e}"
        assert time.perf_counter() - t0 < 120.0


def test_criterion_08_preprocessing_recovery(small_spec, small_truth,
                                             small_processed):
    with criterion(8, "cleaning chain recovers truth; GP fills a 24h gap"):
        t0 = time.perf_counter()
        for ci, name in enumerate(small_processed.channel_names):
            if name == "discharge":
                continue  # its injected noise is relative, not meters
            errs = []
            for seg in small_processed.segments:
                truth_vals = small_truth.channels[name][seg.start:seg.end]
                keep = ~seg.imputed[:, ci]
                errs.append(np.abs(seg.values[:, ci] - truth_vals)[keep])
            mae = float(np.concatenate(errs).mean())
            assert mae < 3.0 * small_spec.noise_std_m, f"{name}: {mae}"
        t = np.arange(400, dtype=float)
        clean = np.sin(2 * np.pi * t / 168.0)
        gappy = clean.copy()
        gappy[180:204] = np.nan
        filled, mask, _ = impute(
            gappy,
            ImputeSpec(short_gap_max=6, poly_degree=1, gp_length_scale=24.0,
                       gp_signal_variance=1.0, gp_noise_variance=1e-4,
                       gp_context=72),
        )
        assert np.max(np.abs(filled[180:204] - clean[180:204])) < 0.05
        assert time.perf_counter() - t0 < 60.0


def test_criterion_09_determinism(small_factory, tmp_path):
    with criterion(9, "same config+seed: bitwise snapshots, identical grid rows"):
        cfg = ModelConfig(variant="ss", input_width=24, label_width=6, units=8,
                          max_epochs=2, learning_rate=1e-2)
        a, _, _ = run_one(cfg, small_factory, seed=77)
        b, _, _ = run_one(cfg, small_factory, seed=77)
        pa, pb = tmp_path / "a.model", tmp_path / "b.model"
        save_model(a, pa)
        save_model(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

        grid = GridSpec(combos=("ss",), variants=("ss",),
                        windows=(WindowSpec(24, 6),), units=(8,),
                        dropouts=(0.0,), repetitions=2, max_epochs=2,
                        learning_rate=1e-2)
        rows = []
        for name in ("r1.csv", "r2.csv"):
            path = tmp_path / name
            run_grid(grid, small_factory, path, base_seed=5)
            # wall_seconds is the one inherently nondeterministic column
            rows.append([
                ",".join(line.split(",")[:-1])
                for line in path.read_text().splitlines()
            ])
        assert rows[0] == rows[1]


def test_criterion_10_forecast_band_contracts(rng):
    with criterion(10, "band ordering, exceedance monotonicity, quantile oracle"):
        t0 = time.perf_counter()
        preds = rng.normal(size=(20, 30, 2))
        fb = band(preds)
        assert (fb.lower <= fb.mean + 1e-14).all()
        assert (fb.mean <= fb.upper + 1e-14).all()

        def quantile_oracle(samples, q):
            s = np.sort(samples)
            pos = q * (len(s) - 1)
            lo = int(np.floor(pos))
            hi = int(np.ceil(pos))
            return s[lo] + (pos - lo) * (s[hi] - s[lo])

        for step in range(30):
            for ci in range(2):
                s = preds[:, step, ci]
                assert abs(fb.lower[step, ci] - quantile_oracle(s, 0.025)) <= 1e-12
                assert abs(fb.upper[step, ci] - quantile_oracle(s, 0.975)) <= 1e-12
        samples = rng.normal(size=200)
        thresholds = np.sort(rng.normal(size=50))
        probs = [exceedance(samples, t) for t in thresholds]
        assert all(a >= b for a, b in zip(probs, probs[1:]))
        assert all(0.0 <= p <= 1.0 for p in probs)
        assert time.perf_counter() - t0 < 1.0


def test_criterion_11_end_to_end_pipeline(tmp_path):
    with criterion(11, "synth->ingest->preprocess->gridsearch->ensemble->"
                       "forecast->alert, exit 0, probabilities in [0,1]"):
        t0 = time.perf_counter()
        out = tmp_path / "ws"
        fast = [
            "--set", "dataset.input_width=48",
            "--set", "dataset.label_width=24",
            "--set", "dataset.test_span_days=150",
            "--set", "dataset.val_span_days=120",
            "--set", "neural.max_epochs=3",
            "--set", "neural.patience=2",
            "--set", "neural.learning_rate=0.01",
        ]
        grid = [
            "--set", "harness.combos=ss",
            "--set", "harness.variants=ss,fd",  # 2 variants
            "--set", "harness.windows=(48,24)",
            "--set", "harness.units=8,16",  # 2 unit sizes
            "--set", "harness.dropouts=0",
            "--set", "harness.repetitions=3",  # K=3
        ]

        def run(args):
            code = cli.main(args + ["--out", str(out), "--seed", "42"] + fast)
            assert code == 0, f"stage {args[0]} exited {code}"

        run(["synth"])
        run(["ingest"])
        run(["preprocess"])
        run(["gridsearch"] + grid)
        best = (out / "gridsearch" / "best.txt").read_text().strip()
        from scourwatch.harness import decode_config

        best_cfg = decode_config(best)
        run(["train", "--repeats", "5",  # ensemble K=5 from the best cell
             "--set", f"neural.variant={best_cfg.variant}",
             "--set", f"neural.units={best_cfg.units}",
             "--set", f"neural.dropout={best_cfg.dropout}",
             "--set", f"dataset.feature_combo={best_cfg.combo}",
             "--set", "earlywarn.origin_stride=24"])
        run(["forecast", "--set", "earlywarn.origin_stride=24"])
        run(["alert"])
        alert_csv = (out / "alert" / "alert.csv").read_text().splitlines()
        prob_rows = [l.split(",") for l in alert_csv[1:] if l[0].isdigit()]
        assert prob_rows, "alert report has no exceedance rows"
        for row in prob_rows:
            assert 0.0 <= float(row[1]) <= 1.0
        assert (out / "alert" / "alert.txt").exists()
        assert time.perf_counter() - t0 < 1800.0
