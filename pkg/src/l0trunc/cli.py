"""Command-line surface for batch experiments and bound verification.

Commands: theory, gmm-verify, train, adv-train, attack, rho, grad-check.
Every run is deterministic given its configuration and seed; ``--jobs``
only changes wall time.  Options may come from an INI config file
(section name = command name, flat ``key = value`` entries); explicit
command-line flags override it, and the resolved configuration is written
next to the outputs.

Exit codes: 0 success, 1 invariant failure, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .adversary import AdvConfig, change_prob_bound, map_error_lower_mc, perturb_many
from .attacks import AttackBudget, median_adv_magnitude, robust_accuracy
from .bounds import (
    budget_bounds,
    candidate_classifier_weights,
    candidate_weights,
    normal_sf,
    robust_error_lower_bound,
    robust_error_upper_bound_diag,
)
from .datasets import LabeledDataset, load_mnist_pair, load_synthetic, split, upscaled_digits
from .gmm import GaussianMixture, SnrVector, normalize, sample, snr_vector
from .linear import TruncatedLinearClassifier
from .network import (
    MNIST_DIMS,
    REDUCED_DIMS,
    TrainConfig,
    finite_difference_check,
    init_net,
    load_model,
    save_model,
)
from .rng import substream
from .training import adversarial_train

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _load_dataset(spec: str, a: float = 1.0) -> LabeledDataset:
    kind, _, arg = spec.partition(":")
    if kind == "digits":
        return upscaled_digits(a)
    if kind == "mnist":
        base = Path(arg)
        return load_mnist_pair(base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte", a)
    if kind == "synth":
        X, y, _ = load_synthetic(arg)
        labels = (np.asarray(y) + 1) // 2
        return LabeledDataset(X, labels, a=float(np.max(np.abs(X)) + 1e-9), provenance=f"synth:{arg}")
    raise argparse.ArgumentTypeError(f"unknown dataset spec {spec!r} (use digits, mnist:DIR or synth:FILE)")


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _arch(text: str) -> tuple[int, ...]:
    if text == "reduced":
        return REDUCED_DIMS
    if text == "mnist":
        return MNIST_DIMS
    return _parse_ints(text)


def _write_resolved(args: argparse.Namespace, out_dir: Path) -> None:
    cp = configparser.ConfigParser()
    cp[args.command] = {
        key: ",".join(str(v) for v in val) if isinstance(val, (tuple, list)) else str(val)
        for key, val in sorted(vars(args).items())
        if key not in ("command", "func", "config") and val is not None
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "config_resolved.ini", "w") as fh:
        cp.write(fh)


def _seeded_profile(d: int, seed: int) -> np.ndarray:
    """Reproducible unit-norm SNR profile with a decaying spectrum."""
    rng = substream(seed, 999)
    nu = rng.standard_normal(d) / np.sqrt(np.arange(1, d + 1))
    return nu / np.linalg.norm(nu)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _cmd_theory(args) -> int:
    if args.nu:
        nu = np.asarray(_parse_floats(args.nu))
    elif args.nu_file:
        nu = np.loadtxt(args.nu_file).reshape(-1)
    elif args.gmm:
        _, _, meta = load_synthetic(args.gmm)
        nu = meta["mu"] / meta["sigma"]
    else:
        nu = _seeded_profile(args.profile_dim, args.seed)
    norm = np.linalg.norm(nu)
    if norm == 0:
        raise ValueError("SNR profile must be nonzero")
    snr = SnrVector(nu / norm)
    eps_grid = np.linspace(args.eps_start, args.eps_stop, args.eps_num)
    if eps_grid.size == 0:
        print("error: empty threshold grid", file=sys.stderr)
        return EXIT_USAGE
    d = args.d if args.d else snr.d
    out_dir = Path(args.out_dir)
    _write_resolved(args, out_dir)
    all_ok = True
    with open(out_dir / "bounds.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["eps", "c", "lambda_c", "k_trunc_lb", "k_star_ub",
             "alpha_trunc_lb", "alpha_star_ub", "c1", "c2", "in_window", "sandwich_ok"]
        )
        for eps in eps_grid:
            row = budget_bounds(snr, float(eps), d=d)
            all_ok &= row.sandwich_ok
            writer.writerow(
                [f"{row.eps:.12g}", f"{row.cutoff:.12g}", row.head_len,
                 f"{row.k_trunc_lb:.12g}", f"{row.k_star_ub:.12g}",
                 f"{row.alpha_trunc_lb:.12g}", f"{row.alpha_star_ub:.12g}",
                 f"{row.c1:.12g}", f"{row.c2:.12g}", int(row.in_window), int(row.sandwich_ok)]
            )
    print(f"wrote {out_dir / 'bounds.csv'} ({eps_grid.size} rows)")
    if not all_ok:
        print("sandwich invariant violated", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_gmm_verify(args) -> int:
    d, trials, seed = args.d, args.trials, args.seed
    model = normalize(GaussianMixture(np.abs(_seeded_profile(d, seed)), np.ones(d)))
    nu = snr_vector(model)
    L = math.log(d)
    lines = []
    ok = True

    def check(name: str, passed: bool, detail: str):
        nonlocal ok
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    cfg = AdvConfig(model=model, A=np.arange(d))
    X, y = sample(model, trials, seed)
    Xp = perturb_many(X, y, cfg, seed + 1)
    changed = (Xp != X).sum(axis=1)
    check("budget-soundness", bool(np.all(changed <= cfg.budget)),
          f"max changed {changed.max()} vs budget {cfg.budget:.3f}")
    fallback = float(np.mean((Xp == X).all(axis=1)))
    se = 3.0 * math.sqrt(max(fallback * (1 - fallback), 1e-12) / trials)
    check("fallback-rate", fallback <= 1.0 / L + se, f"{fallback:.5f} vs 1/log d = {1.0 / L:.5f}")
    rate = (Xp != X).mean(axis=0)
    caps = np.array([change_prob_bound(v) for v in nu])
    margin = 3.0 * np.sqrt(np.maximum(rate * (1 - rate), 1e-12) / trials)
    check("change-rate-caps", bool(np.all(rate <= caps + margin)),
          f"max excess {(rate - caps).max():.5f}")

    mc_trials = max(10_000, trials // 2)
    est_full = map_error_lower_mc(cfg, mc_trials, seed + 2)
    floor_full = 0.5 - 1.0 / (2.0 * L)
    check("map-floor-full", est_full >= floor_full - 3.0 * math.sqrt(0.25 / mc_trials),
          f"{est_full:.5f} vs {floor_full:.5f}")
    A_half = np.arange(d // 2)
    cfg_half = AdvConfig(model=model, A=A_half)
    est_half = map_error_lower_mc(cfg_half, mc_trials, seed + 3)
    comp_norm = float(np.linalg.norm(nu[np.setdiff1d(np.arange(d), A_half)]))
    floor_half = float(normal_sf(comp_norm)) - 1.0 / L
    check("map-floor-subset", est_half >= floor_half - 3.0 * math.sqrt(0.25 / mc_trials),
          f"{est_half:.5f} vs {floor_half:.5f}")

    eps = 0.3
    snr = SnrVector(nu)
    w_tilde = candidate_weights(snr, eps)
    w = candidate_classifier_weights(model, eps)
    k_def = max(1, min(int(cfg_half.budget), (d - 1) // 2))
    clf = TruncatedLinearClassifier(w=w, k=k_def)
    Xh, yh = sample(model, mc_trials, seed + 4)
    Xhp = perturb_many(Xh, yh, cfg_half, seed + 5)
    err = float((clf.predict(Xhp) != yh).mean())
    ub = robust_error_upper_bound_diag(w_tilde, snr.values, k_def, d=d)
    bound = ub.value + 3.0 * math.sqrt(max(err * (1 - err), 1e-12) / mc_trials)
    check("upper-bound-domination", err <= bound,
          f"empirical {err:.5f} vs bound {ub.value:.5f} (clamped={ub.clamped})")

    out_dir = Path(args.out_dir)
    _write_resolved(args, out_dir)
    report = "\n".join(lines)
    (out_dir / "report.txt").write_text(report + "\n")
    print(report)
    return EXIT_OK if ok else EXIT_INVARIANT


def _train_common(args, adversarial: bool) -> int:
    data = _load_dataset(args.data)
    train_ds, _, _ = split(data, (0.8, 0.0, 0.2), seed=args.seed)
    if args.n and args.n < len(train_ds):
        train_ds = train_ds.subset(np.arange(args.n))
    dims = args.arch if isinstance(args.arch, tuple) else _arch(args.arch)
    net = init_net(dims, k=args.k, seed=args.seed)
    config = TrainConfig(
        batch_size=args.batch,
        epochs=args.epochs,
        lr_schedule=args.lr,
        lr_period=args.lr_period,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        regen_period=args.regen,
        seed=args.seed,
    )
    budget = None
    if adversarial:
        budget = AttackBudget(k=args.k_adv, t=args.queries, beta=args.beta, a=data.a)
    out_dir = Path(args.out_dir)
    _write_resolved(args, out_dir)
    history = adversarial_train(net, train_ds.features, train_ds.labels, budget, config, jobs=args.jobs)
    save_model(net, out_dir / "model.bin")
    history.to_csv(out_dir / "history.csv")
    last = history.rows[-1]
    print(f"final clean loss {last.clean_loss:.4f} acc {last.clean_acc:.4f}; model -> {out_dir / 'model.bin'}")
    return EXIT_OK


def _cmd_train(args) -> int:
    return _train_common(args, adversarial=False)


def _cmd_advtrain(args) -> int:
    return _train_common(args, adversarial=True)


def _cmd_attack(args) -> int:
    net = load_model(args.model)
    data = _load_dataset(args.data)
    _, _, test_ds = split(data, (0.8, 0.0, 0.2), seed=args.seed)
    if args.n and args.n < len(test_ds):
        test_ds = test_ds.subset(np.arange(args.n))
    out_dir = Path(args.out_dir)
    _write_resolved(args, out_dir)
    with open(out_dir / "robust_acc.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "t", "robust_accuracy"])
        for k in args.k_adv:
            for t in args.queries:
                budget = AttackBudget(k=k, t=t, beta=args.beta, a=data.a)
                acc = robust_accuracy(net, test_ds.features, test_ds.labels, budget, args.seed, jobs=args.jobs)
                writer.writerow([k, t, f"{acc:.6f}"])
                print(f"k={k} t={t}: robust accuracy {acc:.4f}")
    return EXIT_OK


def _cmd_rho(args) -> int:
    net = load_model(args.model)
    data = _load_dataset(args.data)
    _, _, test_ds = split(data, (0.8, 0.0, 0.2), seed=args.seed)
    if args.n and args.n < len(test_ds):
        test_ds = test_ds.subset(np.arange(args.n))
    out_dir = Path(args.out_dir)
    _write_resolved(args, out_dir)
    with open(out_dir / "rho.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["beta", "rho", "n_failed"])
        for beta in args.beta:
            report = median_adv_magnitude(
                net, test_ds.features, test_ds.labels, args.restarts, args.seed,
                a=data.a, beta=beta, jobs=args.jobs,
            )
            writer.writerow([beta, f"{report.rho:.6g}", report.n_failed])
            print(f"beta={beta}: rho={report.rho} (failures {report.n_failed})")
    return EXIT_OK


def _cmd_grad_check(args) -> int:
    rng = substream(args.seed)
    net = init_net((20, 8, 3), k=3, seed=args.seed)
    X = rng.uniform(-1, 1, size=(5, 20))
    Y = rng.integers(0, 3, size=5)
    worst, checked, skipped = finite_difference_check(net, X, Y)
    print(f"max relative gradient error {worst:.3e} over {checked} parameters ({skipped} mask-unstable skipped)")
    return EXIT_OK if worst < 1e-4 else EXIT_INVARIANT


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="l0trunc", description=__doc__)
    parser.add_argument("--version", action="version", version=f"l0trunc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="INI config file; section name = command")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--out-dir", default="out")

    p = sub.add_parser("theory", help="emit bound curves as CSV")
    common(p)
    p.add_argument("--nu", help="comma-separated SNR profile")
    p.add_argument("--nu-file", help="text file with one SNR entry per line")
    p.add_argument("--gmm", help="synthetic dataset whose sidecar supplies mu and sigma")
    p.add_argument("--profile-dim", type=int, default=100, help="dimension of the seeded default profile")
    p.add_argument("--d", type=float, default=None, help="symbolic dimension for the log terms")
    p.add_argument("--eps-start", type=float, default=0.17)
    p.add_argument("--eps-stop", type=float, default=0.49)
    p.add_argument("--eps-num", type=int, default=33)
    p.set_defaults(func=_cmd_theory)

    p = sub.add_parser("gmm-verify", help="Monte-Carlo verification of the mixture bounds")
    common(p)
    p.add_argument("--d", type=int, default=100)
    p.add_argument("--trials", type=int, default=100_000)
    p.set_defaults(func=_cmd_gmm_verify)

    for name, fn, adv in (("train", _cmd_train, False), ("adv-train", _cmd_advtrain, True)):
        p = sub.add_parser(name, help=f"{'adversarially ' if adv else ''}train a feed-forward net")
        common(p)
        p.add_argument("--data", default="digits", help="digits | mnist:DIR | synth:FILE")
        p.add_argument("--arch", type=_arch, default="reduced", help="reduced | mnist | comma dims")
        p.add_argument("--k", type=int, default=0, help="truncation parameter of layer 1")
        p.add_argument("--epochs", type=int, default=20)
        p.add_argument("--batch", type=int, default=64)
        p.add_argument("--lr", type=_parse_floats, default=(0.05,))
        p.add_argument("--lr-period", type=int, default=25)
        p.add_argument("--momentum", type=float, default=0.9)
        p.add_argument("--weight-decay", type=float, default=0.0)
        p.add_argument("--n", type=int, default=0, help="cap on training samples (0 = all)")
        if adv:
            p.add_argument("--k-adv", type=int, default=10)
            p.add_argument("--queries", type=int, default=100)
            p.add_argument("--beta", type=float, default=100.0)
        p.add_argument("--regen", type=int, default=5)
        p.set_defaults(func=fn)

    p = sub.add_parser("attack", help="robust accuracy of a saved model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", default="digits")
    p.add_argument("--k-adv", type=_parse_ints, default=(3,))
    p.add_argument("--queries", type=_parse_ints, default=(300,))
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--n", type=int, default=0, help="cap on test samples (0 = all)")
    p.set_defaults(func=_cmd_attack)

    p = sub.add_parser("rho", help="median pointwise-attack magnitude of a saved model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", default="digits")
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--beta", type=_parse_floats, default=(100.0,))
    p.add_argument("--n", type=int, default=100)
    p.set_defaults(func=_cmd_rho)

    p = sub.add_parser("grad-check", help="finite-difference check of the backward pass")
    common(p)
    p.set_defaults(func=_cmd_grad_check)

    return parser


def _apply_config(parser, argv):
    # first pass finds --config; its section becomes the defaults, so any
    # explicit flag still wins
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    args = parser.parse_args(argv)
    if known.config:
        cp = configparser.ConfigParser()
        if not cp.read(known.config):
            raise OSError(f"cannot read config file {known.config}")
        if args.command in cp:
            section = {key.replace("-", "_"): val for key, val in cp[args.command].items()}
            sub_map = {a.dest: a for sp in parser._subparsers._group_actions for a in sp.choices[args.command]._actions}
            overrides = {}
            for key, raw in section.items():
                action = sub_map.get(key)
                if action is None:
                    raise ValueError(f"unknown config key {key!r} for command {args.command}")
                overrides[key] = action.type(raw) if action.type else raw
            cmd_parser = parser._subparsers._group_actions[0].choices[args.command]
            cmd_parser.set_defaults(**overrides)
            args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except (OSError, IOError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
