"""Command-line entry point.

Subcommands: calibrate, validate-sampling, train, eval, generate, cue,
quantize.  Every run is reproducible: the config (file plus overrides) and
the seed fully determine all artifacts byte for byte; each text artifact
embeds the config hash in its header comments.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io as sio
from .calibration import (calibrate, inverse_transfer, map_rbm_to_network,
                          build_rbm_network, network_matched_fit,
                          predict_transfer_curve)
from .config import ExperimentConfig
from .estimators import CDDigitClassifier, SpikingCDClassifier
from .evaluation import (QuantizationSpec, classify_by_free_energy,
                         cue_integration, generate_digit, quantize_params)
from .mnist import (binarize, class_balanced_subset, load_idx,
                    surrogate_digits)
from .network import CurrentSchedule, run_network
from .neurons import NeuronConfig, SAMPLE_RATE
from .rbm import RbmParams, random_rbm
from .rng import spawn_seed
from .sampling import (abstract_neural_sample, exact_boltzmann,
                       gibbs_sample_rbm, kl_vs_time, spikes_to_binary_trace)


def _load_config(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k] = v
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.dt is not None:
        overrides["dt"] = args.dt
    if args.config:
        try:
            base = ExperimentConfig.load(args.config)
        except ValueError as e:
            raise SystemExit(str(e))
    else:
        base = ExperimentConfig()
    merged = base.to_dict()
    for k, v in overrides.items():
        if k not in merged:
            raise SystemExit(f"unknown config key {k!r}")
        merged[k] = type(merged[k])(v)
    try:
        return ExperimentConfig(**merged)
    except ValueError as e:
        raise SystemExit(str(e))


def _meta(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config": cfg.hash()}


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_dataset(images, labels, what: str):
    if images and labels:
        return load_idx(images, labels)
    if images or labels:
        raise SystemExit(f"need both --{what}-images and --{what}-labels")
    print(f"note: no {what} IDX files given; using the bundled surrogate "
          "digit set", file=sys.stderr)
    return surrogate_digits()


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    ncfg = cfg.neuron_config()
    if args.tau_r is not None:
        ncfg = NeuronConfig(cfg.capacitance, cfg.g_leak, cfg.theta,
                            cfg.u_reset, args.tau_r, cfg.sigma)
    meta = _meta(cfg, "calibrate")
    if ncfg.tau_refr == 0.0:
        # exponential-regime curve: no sigmoid fit, just the curve
        from .calibration import calibration_grid, measure_transfer_curve
        grid = np.linspace(-2.7e-9, -1.6e-9, 21)
        curve = measure_transfer_curve(ncfg, grid, cfg.calibration_duration,
                                       cfg.seed, cfg.dt)
        sio.write_csv(out / "transfer_curve.csv", "current_a,rate_hz",
                      zip(curve.currents, curve.rates), meta)
        print(f"wrote {out/'transfer_curve.csv'} (tau_r=0 variant, no fit)")
        return 0
    try:
        if args.network_matched:
            fit = network_matched_fit(ncfg, duration=cfg.calibration_duration,
                                      seed=cfg.seed, dt=cfg.dt,
                                      nu_bias=cfg.nu_bias)
            from .calibration import calibration_grid, measure_transfer_curve
            curve = measure_transfer_curve(ncfg, calibration_grid(ncfg),
                                           cfg.calibration_duration,
                                           cfg.seed, cfg.dt)
        else:
            curve, fit = calibrate(ncfg, duration=cfg.calibration_duration,
                                   seed=cfg.seed, dt=cfg.dt)
    except ValueError as e:
        raise SystemExit(f"calibration failed: {e}")
    sio.write_csv(out / "transfer_curve.csv", "current_a,rate_hz",
                  zip(curve.currents, curve.rates), meta)
    sio.save_fit(fit, out / "fit.txt", meta)
    pred = predict_transfer_curve(ncfg, curve.currents)
    sio.write_csv(out / "predicted_curve.csv", "current_a,rate_hz",
                  zip(curve.currents, pred), meta)
    print(f"beta={fit.beta:.6g} gamma={fit.gamma:.6g} tau_r={fit.tau_r:.6g}")
    return 0


def _sampling_trial(payload):
    (trial, seed, dt, duration, checkpoints, nu_bias, cfg_dict) = payload
    ncfg = ExperimentConfig(**cfg_dict).neuron_config()
    fit = _sampling_trial.fit
    rbm = random_rbm(5, 5, spawn_seed(seed, trial))
    exact = exact_boltzmann(rbm.to_boltzmann())
    mapping = map_rbm_to_network(rbm, fit, nu_bias=nu_bias)
    net = build_rbm_network(rbm, mapping, ncfg)
    rec = run_network(net, None, duration, spawn_seed(seed, 1000 + trial), dt)
    trace = spikes_to_binary_trace(rec, ncfg.tau_refr)
    t_samples = (np.arange(trace.states.shape[0]) + 1) / SAMPLE_RATE
    rows = {}
    rows["if"] = kl_vs_time(trace.codes(), t_samples, exact, checkpoints)
    iters = int(round(duration / ncfg.tau_refr))
    codes_g = gibbs_sample_rbm(rbm.W, rbm.b_v, rbm.b_h, iters,
                               spawn_seed(seed, 2000 + trial))
    t_g = (np.arange(iters) + 1) * ncfg.tau_refr
    rows["gibbs"] = kl_vs_time(codes_g, t_g, exact, checkpoints)
    for name, psp in (("abstract_rect", "rect"), ("abstract_alpha", "alpha")):
        rec_a = abstract_neural_sample(rbm.to_boltzmann(), duration,
                                       spawn_seed(seed, 3000 + trial), psp=psp)
        tr_a = spikes_to_binary_trace(rec_a, ncfg.tau_refr)
        rows[name] = kl_vs_time(tr_a.codes(), t_samples, exact, checkpoints)
    return trial, rows


def cmd_validate_sampling(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    meta = _meta(cfg, "validate-sampling")
    ncfg = cfg.neuron_config()
    checkpoints = np.array(sorted(float(c) for c in args.checkpoints.split(",")))
    if args.plain_calibration:
        _, fit = calibrate(ncfg, duration=20.0, seed=cfg.seed, dt=cfg.dt)
    else:
        fit = network_matched_fit(ncfg, seed=cfg.seed, dt=cfg.dt,
                                  nu_bias=cfg.nu_bias)
    _sampling_trial.fit = fit
    payloads = [(t, cfg.seed, cfg.dt, args.duration, checkpoints, cfg.nu_bias,
                 cfg.to_dict()) for t in range(args.trials)]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs,
                                 initializer=_set_trial_fit,
                                 initargs=(fit,)) as ex:
            results = list(ex.map(_sampling_trial, payloads))
    else:
        results = [_sampling_trial(p) for p in payloads]
    summary = []
    finals = {}
    for trial, rows in results:
        for sampler, kls in rows.items():
            sio.write_csv(out / f"kl_{sampler}_trial{trial}.csv", "time_s,kl",
                          zip(checkpoints, kls), meta)
            finals.setdefault(sampler, []).append(kls[-1])
            summary.append((sampler, trial, float(kls[-1])))
    sio.write_csv(out / "summary.csv", "sampler,trial,final_kl", summary, meta)
    for sampler, v in sorted(finals.items()):
        print(f"{sampler}: mean final KL over {args.trials} trials = "
              f"{np.mean(v):.4f}")
    return 0


def _set_trial_fit(fit):
    _sampling_trial.fit = fit


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    meta = _meta(cfg, "train")
    data = _load_dataset(args.train_images, args.train_labels, "train")
    classes = np.arange(args.classes)
    keep = np.isin(data.labels, classes)
    X, y = data.flat()[keep], data.labels[keep]
    if args.subset_size:
        idx = class_balanced_subset(y, args.subset_size, args.subset_seed,
                                    classes)
        X, y = X[idx], y[idx]
    if args.mode == "cd":
        clf = CDDigitClassifier(n_hidden=args.hidden,
                                units_per_class=args.units_per_class,
                                epsilon=cfg.cd_epsilon,
                                minibatch=cfg.cd_minibatch,
                                epochs=args.epochs, seed=cfg.seed)
        clf.fit(X, y)
        rbm = clf.rbm_
        curve_rows = [(len(X) * args.epochs, float("nan"),
                       float(rbm.W.mean()))]
    else:
        clf = SpikingCDClassifier(n_hidden=args.hidden,
                                  units_per_class=args.units_per_class,
                                  n_presentations=args.presentations,
                                  stdp_A=cfg.stdp_A, seed=cfg.seed, dt=cfg.dt,
                                  config=cfg)
        clf.fit(X, y)
        rbm = clf.rbm_
        sio.save_fit(clf.fit_, out / "fit.txt", meta)
        curve_rows = [(args.presentations, float("nan"), float(rbm.W.mean()))]
        print(f"hidden rate: initial {clf.hidden_rates_[0]:.1f} Hz -> "
              f"final {clf.hidden_rates_[1]:.1f} Hz")
    sio.save_snapshot(rbm, out / "snapshot.bin")
    sio.write_csv(out / "learning_curve.csv",
                  "presentation,accuracy,mean_weight", curve_rows, meta)
    print(f"wrote {out/'snapshot.bin'}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    meta = _meta(cfg, "eval")
    rbm = sio.load_snapshot(args.snapshot)
    data = _load_dataset(args.test_images, args.test_labels, "test")
    n_labels = args.classes
    keep = np.isin(data.labels, np.arange(n_labels))
    X, y = data.flat()[keep], data.labels[keep]
    if args.n_test and args.n_test < len(X):
        X, y = X[:args.n_test], y[:args.n_test]
    if args.method == "free-energy":
        correct = 0
        for r in range(len(X)):
            pred = classify_by_free_energy(rbm, binarize(X[r]), n_labels)
            correct += int(pred == y[r])
        acc = correct / len(X)
        window = 0.0
    else:
        fit = sio.load_fit(args.fit) if args.fit else network_matched_fit(
            cfg.neuron_config(), seed=cfg.seed, dt=cfg.dt, nu_bias=cfg.nu_bias)
        from .learning import EcdOptions, EventDrivenTrainer, ModulationSchedule, StdpConfig
        opts = EcdOptions(schedule=ModulationSchedule(cfg.T_half, cfg.tau_br),
                          stdp=StdpConfig(cfg.stdp_A, cfg.tau_stdp),
                          nu_bias=cfg.nu_bias, tau_syn=cfg.tau_syn)
        trainer = EventDrivenTrainer(rbm, fit, cfg.neuron_config(), opts,
                                     cfg.seed, cfg.dt)
        per = rbm.n_class // n_labels
        from .mnist import clamp_currents as _cc
        correct = 0
        for r in range(len(X)):
            groups, _ = trainer.rate_readout(_cc(binarize(X[r]), fit),
                                             args.settle, args.window,
                                             n_labels, per)
            correct += int(int(np.argmax(groups)) == y[r])
        acc = correct / len(X)
        window = args.window
    sio.write_csv(out / "accuracy.csv", "n_test,window_s,accuracy",
                  [(len(X), float(window), float(acc))], meta)
    print(f"accuracy = {acc:.4f} on {len(X)} digits ({args.method})")
    return 0


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    meta = _meta(cfg, "generate")
    rbm = sio.load_snapshot(args.snapshot)
    fit = sio.load_fit(args.fit) if args.fit else network_matched_fit(
        cfg.neuron_config(), seed=cfg.seed, dt=cfg.dt, nu_bias=cfg.nu_bias)
    rates, record = generate_digit(rbm, fit, cfg.neuron_config(), args.label,
                                   args.duration, cfg.seed,
                                   n_labels=args.classes, dt=cfg.dt,
                                   watchdog=not args.no_watchdog)
    side = int(round(np.sqrt(rbm.n_sensory)))
    sio.write_csv(out / "rates.csv", "pixel,rate_hz",
                  enumerate(map(float, rates)), meta)
    sio.write_pgm(out / "image.pgm", rates.reshape(side, side),
                  1.0 / cfg.tau_r, meta)
    sio.spike_record_to_csv(record, out / "spikes.csv", meta)
    print(f"wrote {out/'image.pgm'}")
    return 0


def cmd_cue(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    meta = _meta(cfg, "cue")
    rbm = sio.load_snapshot(args.snapshot)
    fit = sio.load_fit(args.fit) if args.fit else network_matched_fit(
        cfg.neuron_config(), seed=cfg.seed, dt=cfg.dt, nu_bias=cfg.nu_bias)
    data = _load_dataset(args.test_images, args.test_labels, "test")
    pixels = data.images[args.index]
    side = pixels.shape[0]
    mask = np.zeros((side, side), dtype=bool)
    if args.half == "right":
        mask[:, side // 2:] = True
    elif args.half == "left":
        mask[:, :side // 2] = True
    else:
        mask[:, :] = True
    allowed = {int(c) for c in args.allowed.split(",")} if args.allowed else \
        set(range(args.classes))
    readout, recon, record = cue_integration(
        rbm, fit, cfg.neuron_config(), binarize(pixels.ravel()), mask.ravel(),
        allowed, args.duration, cfg.seed, n_labels=args.classes, dt=cfg.dt)
    sio.write_pgm(out / "reconstruction.pgm", recon.reshape(side, side),
                  1.0 / cfg.tau_r, meta)
    sio.write_csv(out / "readout.csv", "label,rate_hz",
                  enumerate(map(float, readout.rates)), meta)
    print(f"winner = {readout.label} "
          f"(true label {int(data.labels[args.index])}, allowed {sorted(allowed)})")
    return 0


def cmd_quantize(args) -> int:
    cfg = _load_config(args)
    out = _outdir(args)
    rbm = sio.load_snapshot(args.snapshot)
    spec = QuantizationSpec.from_params(rbm, args.bits)
    q = quantize_params(rbm, spec)
    sio.save_snapshot(q, out / f"snapshot_q{args.bits}.bin")
    print(f"wrote {out / f'snapshot_q{args.bits}.bin'} "
          f"(max |dW| = {np.abs(q.W - rbm.W).max():.3e})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spiking-rbm", description=__doc__)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers across independent trials")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="measure the transfer curve and fit")
    c.add_argument("--tau-r", type=float, default=None,
                   help="override the refractory period (0 for the "
                        "exponential-regime curve)")
    c.add_argument("--network-matched", action="store_true",
                   help="fit under a representative bias background")
    c.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("validate-sampling",
                       help="KL-vs-time of IF, abstract and Gibbs samplers")
    v.add_argument("--trials", type=int, default=10)
    v.add_argument("--duration", type=float, default=200.0)
    v.add_argument("--checkpoints", default="2,20,200")
    v.add_argument("--plain-calibration", action="store_true",
                   help="map with the white-noise-only fit")
    v.set_defaults(func=cmd_validate_sampling)

    t = sub.add_parser("train", help="train a model (event-driven or standard CD)")
    t.add_argument("--mode", choices=("ecd", "cd"), default="ecd")
    t.add_argument("--train-images")
    t.add_argument("--train-labels")
    t.add_argument("--classes", type=int, default=10)
    t.add_argument("--hidden", type=int, default=100)
    t.add_argument("--units-per-class", type=int, default=4)
    t.add_argument("--presentations", type=int, default=3000)
    t.add_argument("--epochs", type=int, default=15, help="cd mode epochs")
    t.add_argument("--subset-size", type=int, default=0)
    t.add_argument("--subset-seed", type=int, default=0)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="classification accuracy of a snapshot")
    e.add_argument("--snapshot", required=True)
    e.add_argument("--fit", help="fit file (rate method); default recalibrates")
    e.add_argument("--method", choices=("rate", "free-energy"), default="rate")
    e.add_argument("--test-images")
    e.add_argument("--test-labels")
    e.add_argument("--classes", type=int, default=10)
    e.add_argument("--n-test", type=int, default=300)
    e.add_argument("--window", type=float, default=0.2)
    e.add_argument("--settle", type=float, default=0.05)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("generate", help="generate a digit from a label")
    g.add_argument("--snapshot", required=True)
    g.add_argument("--fit")
    g.add_argument("--label", type=int, required=True)
    g.add_argument("--classes", type=int, default=10)
    g.add_argument("--duration", type=float, default=0.3)
    g.add_argument("--no-watchdog", action="store_true")
    g.set_defaults(func=cmd_generate)

    q = sub.add_parser("cue", help="integrate a partial image with label cues")
    q.add_argument("--snapshot", required=True)
    q.add_argument("--fit")
    q.add_argument("--test-images")
    q.add_argument("--test-labels")
    q.add_argument("--index", type=int, default=0)
    q.add_argument("--half", choices=("right", "left", "full"), default="right")
    q.add_argument("--allowed", help="comma-separated allowed labels")
    q.add_argument("--classes", type=int, default=10)
    q.add_argument("--duration", type=float, default=0.5)
    q.set_defaults(func=cmd_cue)

    z = sub.add_parser("quantize", help="discretize snapshot parameters")
    z.add_argument("--snapshot", required=True)
    z.add_argument("--bits", type=int, required=True)
    z.set_defaults(func=cmd_quantize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FloatingPointError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
