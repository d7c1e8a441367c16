"""Command-line entry point: ``bcgd <subcommand> [flags]``.

Exit codes: 0 success, 1 check or convergence failure, 2 usage or format
error, 3 numerical divergence.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import io as bio
from ._random import stream
from .descent import adversarial_bc_trace, check_sufficient_descent, quadratic_scenario
from .exceptions import BCGDError, ConfigError, DegenerateInputError, DivergedError, FormatError, StepFailureError
from .weights import project

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


TRAIN_DEFAULTS = {
    "bits_w": 1,
    "bits_a": 4,
    "variant": "three",
    "rho": 1e-5,
    "lr": 0.01,
    "rate_factor": 0.01,
    "momentum": 0.9,
    "weight_decay": 1e-4,
    "milestones": (),
    "decay": 0.1,
    "epochs": 50,
    "batch_size": 32,
    "seed": 0,
    "keep_ends_float": True,
}


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _bool(s):
    try:
        return bio._parse_bool(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _ints(s):
    try:
        return tuple(int(x) for x in s.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {s!r}") from None


def build_parser(suppress_defaults=False):
    """The argument parser; with ``suppress_defaults`` unset flags are absent from the namespace."""
    fmt = argparse.ArgumentDefaultsHelpFormatter
    sup = {"argument_default": argparse.SUPPRESS} if suppress_defaults else {}

    def d(value):
        return {} if suppress_defaults else {"default": value}

    common = Parser(add_help=False, **sup)
    common.add_argument("--seed", type=int, help="master seed for all random streams", **d(0))
    common.add_argument("--config", type=Path, help="key = value config file", **d(None))
    common.add_argument("--out", type=Path, help="output path (file or directory, per subcommand)", **d(None))
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr", **d(False))

    parser = Parser(prog="bcgd", description="Quantized network training and analysis tools.", formatter_class=fmt, **sup)
    subs = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    subs.required = True

    p = subs.add_parser("train", parents=[common], formatter_class=fmt, help="train a quantized MLP", **sup)
    p.add_argument("--dataset", choices=("blobs", "idx"), help="training data source", **d("blobs"))
    p.add_argument("--images", type=Path, help="IDX image file (dataset=idx)", **d(None))
    p.add_argument("--labels", type=Path, help="IDX label file (dataset=idx)", **d(None))
    p.add_argument("--n-samples", type=int, help="blob count", **d(1000))
    p.add_argument("--n-features", type=int, help="blob dimension", **d(2))
    p.add_argument("--n-classes", type=int, help="blob classes", **d(2))
    p.add_argument("--separation", type=float, help="distance between blob means", **d(6.0))
    p.add_argument("--hidden", type=_ints, help="hidden layer widths", **d((16,)))
    p.add_argument("--method", choices=("bcgd", "bc", "pgd"), help="optimizer", **d("bcgd"))
    p.add_argument("--bits-w", dest="bits_w", type=int, help="weight bit-width", **d(TRAIN_DEFAULTS["bits_w"]))
    p.add_argument("--bits-a", dest="bits_a", type=int, help="activation bit-width", **d(TRAIN_DEFAULTS["bits_a"]))
    p.add_argument("--variant", choices=("ae", "three", "two"), help="alpha-derivative proxy", **d("three"))
    p.add_argument("--rho", type=float, help="blending factor", **d(TRAIN_DEFAULTS["rho"]))
    p.add_argument("--lr", type=float, help="weight learning rate", **d(TRAIN_DEFAULTS["lr"]))
    p.add_argument("--rate-factor", dest="rate_factor", type=float, help="alpha lr / weight lr", **d(0.01))
    p.add_argument("--momentum", type=float, help="momentum coefficient", **d(TRAIN_DEFAULTS["momentum"]))
    p.add_argument("--weight-decay", dest="weight_decay", type=float, help="L2 on float weights", **d(1e-4))
    p.add_argument("--milestones", type=_ints, help="epochs at which lr decays", **d(()))
    p.add_argument("--decay", type=float, help="lr multiplier at each milestone", **d(TRAIN_DEFAULTS["decay"]))
    p.add_argument("--epochs", type=int, help="training epochs", **d(TRAIN_DEFAULTS["epochs"]))
    p.add_argument("--batch-size", dest="batch_size", type=int, help="mini-batch size", **d(32))
    p.add_argument("--keep-ends-float", dest="keep_ends_float", type=_bool, help="first/last layer in float", **d(True))

    p = subs.add_parser("lab-verify", parents=[common], formatter_class=fmt, help="closed forms vs Monte Carlo", **sup)
    p.add_argument("--m", type=int, help="second-layer width", **d(4))
    p.add_argument("--n", type=int, help="filter length", **d(4))
    p.add_argument("--samples", type=int, help="Monte Carlo samples per estimate", **d(200_000))
    p.add_argument("--trials", type=int, help="random models", **d(10))
    p.add_argument("--jobs", type=int, help="threads for Monte Carlo chunks", **d(1))

    p = subs.add_parser("lab-descend", parents=[common], formatter_class=fmt, help="normalized coarse GD run", **sup)
    p.add_argument("--m", type=int, help="second-layer width", **d(4))
    p.add_argument("--n", type=int, help="filter length", **d(4))
    p.add_argument("--eta", type=float, help="initial step size", **d(0.1))
    p.add_argument("--max-iters", dest="max_iters", type=int, help="iteration cap", **d(100_000))
    p.add_argument("--tol", type=float, help="gradient-norm stopping threshold", **d(1e-6))
    p.add_argument("--max-halvings", dest="max_halvings", type=int, help="step-size halvings allowed", **d(20))
    p.add_argument("--init", choices=("remark1", "random", "stationary-adjacent", "teacher"),
                   help="initialization", **d("remark1"))

    p = subs.add_parser("quantize", parents=[common], formatter_class=fmt, help="project a weight file", **sup)
    p.add_argument("weights", type=Path, help="input weight file")
    p.add_argument("--bits", type=int, help="weight bit-width", **d(1))

    p = subs.add_parser("check-descent", parents=[common], formatter_class=fmt, help="sufficient-descent margins", **sup)
    p.add_argument("--scenario", choices=("quadratic", "adversarial"), help="built-in objective", **d("quadratic"))
    p.add_argument("--rho", type=float, help="blending factor (quadratic scenario)", **d(1e-5))
    p.add_argument("--lipschitz", type=float, help="gradient Lipschitz constant L", **d(1.0))
    p.add_argument("--c", type=float, help="descent constant; eta = rho / (L + c)", **d(1.0))
    p.add_argument("--dim", type=int, help="weight dimension", **d(2))
    p.add_argument("--bits", type=int, help="weight bit-width", **d(2))
    p.add_argument("--steps", type=int, help="steps per start", **d(100))
    p.add_argument("--starts", type=int, help="random starts", **d(1))
    return parser


def _explicit(argv):
    """Names of flags given on the command line."""
    ns, _ = build_parser(suppress_defaults=True).parse_known_args(argv)
    return set(vars(ns))


def _out(args, default):
    return Path(args.out) if args.out is not None else Path(default)


def cmd_train(args, argv):
    from .datasets import gen_gaussian_blobs, load_idx, train_val_split
    from .estimator import QuantizedMLPClassifier

    cfg = dict(TRAIN_DEFAULTS)
    if args.config is not None:
        cfg.update(bio.read_config(args.config))
    given = _explicit(argv)
    for key in TRAIN_DEFAULTS:
        if key in given or args.config is None:
            cfg[key] = getattr(args, key)
    if args.dataset == "blobs":
        data = gen_gaussian_blobs(args.n_samples, args.n_features, args.n_classes, args.separation, cfg["seed"])
    else:
        if args.images is None or args.labels is None:
            raise ConfigError("dataset=idx needs --images and --labels")
        data = load_idx(args.images, args.labels)
    train, val = train_val_split(data)
    clf = QuantizedMLPClassifier(
        hidden_layer_sizes=tuple(args.hidden),
        method=args.method,
        random_state=cfg["seed"],
        **{k: cfg[k] for k in TRAIN_DEFAULTS if k != "seed"},
    )
    out = _out(args, "run")
    out.mkdir(parents=True, exist_ok=True)
    try:
        clf.fit(train.inputs, train.labels, val.inputs if len(val) else None, val.labels if len(val) else None)
    finally:
        if hasattr(clf, "metrics_"):
            bio.write_metrics(clf.metrics_, out / "metrics.csv")
    bio.save_checkpoint(out / "checkpoint", clf.net_, cfg["bits_w"])
    recs = clf.metrics_.records
    if recs:
        last = recs[-1]
        print(f"epoch {last['epoch']}: train_loss={last['train_loss']:.6f} train_acc={last['train_acc']:.4f} "
              f"val_acc={last['val_acc']:.4f}")
    else:
        print("no epochs run; checkpoint holds the initialization")
    print(f"wrote {out / 'metrics.csv'} and {out / 'checkpoint'}")
    return EXIT_OK


def cmd_lab_verify(args, argv):
    from .gaussian_lab.verify import format_table, rows_to_csv, run_suite, summary

    if args.m < 1 or args.n < 1:
        raise ConfigError("--m and --n must be at least 1")
    if args.samples < 2 or args.trials < 1:
        raise ConfigError("--samples must be at least 2 and --trials at least 1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rows = run_suite(args.m, args.n, args.samples, args.trials, args.seed, n_jobs=args.jobs)
    if caught:
        print(f"warning: {caught[0].message}; using 10-SE gates", file=sys.stderr)
    print(format_table(rows))
    text, failed = summary(rows)
    print(text)
    out = _out(args, "lab_verify.csv")
    out.write_text(rows_to_csv(rows), encoding="utf-8")
    for r in failed:
        print(f"FAILED: {r.check} (trial {r.trial}): statistic {r.statistic:.3e} > gate {r.gate:g}", file=sys.stderr)
    return EXIT_CHECK if failed else EXIT_OK


def cmd_lab_descend(args, argv):
    from .gaussian_lab.closed_form import stationary_point
    from .gaussian_lab.dynamics import TRAJECTORY_COLUMNS, descend, init_model
    from .gaussian_lab.model import random_model

    rng = stream(args.seed, "init")
    if args.init == "teacher":
        model = random_model(rng, args.m, args.n).at_teacher()
    else:
        model = init_model(args.init, rng, args.m, args.n)
    run = descend(model, args.eta, args.max_iters, args.tol, args.max_halvings)
    for e in run.events:
        print(f"note: {e}", file=sys.stderr)
    out = _out(args, "lab_descend.csv")
    bio.write_csv(out, TRAJECTORY_COLUMNS, run.rows)
    fin = run.final
    print(f"eta={run.eta:g} iterations={fin['t']} f={fin['f']:.3e} |grad_v|={fin['grad_v_norm']:.3e} "
          f"|E[g]|={fin['coarse_grad_w_norm']:.3e} theta={fin['theta']:.3e} |v-v*|={fin['v_dist']:.3e}")
    if args.init == "stationary-adjacent":
        sp = stationary_point(model.v_star)
        d_sp = float(np.linalg.norm(run.model.v - sp.v)) + abs(run.model.theta - sp.theta)
        d_gm = fin["v_dist"] + fin["theta"]
        if d_gm < 1e-3:
            where = "the global minimizer"
        elif d_sp < 1e-3:
            where = "the stationary point"
        else:
            where = f"another critical point (theta={fin['theta']:.6f})"
        print(f"terminal point: {where}; distance to stationary point {d_sp:.3e}, to global minimizer {d_gm:.3e}")
    print(f"wrote {out}")
    if not run.converged:
        print(f"did not converge within {args.max_iters} iterations", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_quantize(args, argv):
    w_f = bio.read_weights(args.weights)
    qw = project(w_f, args.bits)
    out = _out(args, str(args.weights) + ".q")
    bio.write_quantized(out, qw, w_f)
    hist = bio.level_histogram(qw.q)
    print(f"delta={qw.delta!r}")
    print(f"objective={qw.objective(w_f)!r}")
    print("levels: " + " ".join(f"{level}:{count}" for level, count in hist.items()))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_check_descent(args, argv):
    if args.scenario == "adversarial":
        trace, L = adversarial_bc_trace()
        reports = [check_sufficient_descent(trace, 0.0, 0.01, L, args.c)]
    else:
        if not 0.0 < args.rho <= 1.0:
            raise ConfigError("--rho must lie in (0, 1] for the quadratic scenario")
        reports = []
        for i in range(args.starts):
            rng = stream(args.seed, "sweep", i)
            trace, eta = quadratic_scenario(rng, args.dim, args.bits, args.rho, args.lipschitz, args.c, args.steps)
            reports.append(check_sufficient_descent(trace, args.rho, eta, args.lipschitz, args.c))
    rows = []
    for i, rep in enumerate(reports):
        if len(reports) == 1 or rep.violations:
            print(f"start {i}: rho={rep.rho:g} eta={rep.eta:.3e} L={rep.lipschitz:g} c={rep.c:g}")
            print(rep.format())
        rows += [(i, r.step, r.f_before, r.f_after, r.move_sq, r.gap, r.margin, r.bound, r.status) for r in rep.rows]
    out = _out(args, "check_descent.csv")
    bio.write_csv(out, ("start", "step", "f_before", "f_after", "move_sq", "gap", "margin", "bound", "status"), rows)
    violated = sum(len(r.violations) for r in reports)
    unguaranteed = sum(len(r.unguaranteed) for r in reports)
    worst = max(r.max_margin for r in reports)
    print(f"{len(reports)} start(s), worst margin {worst:.3e}, {violated} violated, {unguaranteed} not guaranteed")
    if unguaranteed:
        print(f"warning: {unguaranteed} step(s) carry no sufficient-descent guarantee", file=sys.stderr)
    return EXIT_CHECK if violated else EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "lab-verify": cmd_lab_verify,
    "lab-descend": cmd_lab_descend,
    "quantize": cmd_quantize,
    "check-descent": cmd_check_descent,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args, argv)
    except DivergedError as exc:
        print(f"error: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except StepFailureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (ConfigError, FormatError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BCGDError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
