"""Command-line front end: ``ssimm synth | train | embed | eval | verify``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import _accel
from . import distortion_lab as dl
from . import eval_harness as ev
from .image_blocks import read_pgm
from .model import (
    METHODS,
    ExperimentConfig,
    decode_array,
    dumps_json,
    embed_images,
    encode_array,
    load_model,
    save_model,
    train,
)
from .verify import run_all

log = logging.getLogger("ssimm")


def cmd_synth(args):
    base = read_pgm(args.image) if args.image else dl.bundled_image()
    levels = dl.parse_levels(args.levels)
    items = dl.synth_dataset(base, levels, seed=args.seed, tol=args.tol)
    path = dl.write_dataset(items, args.out, extra={"seed": args.seed, "levels": levels})
    log.info("wrote %d images and %s", len(items), path)
    return 0


def _config_from_args(args):
    return ExperimentConfig(
        method=args.method,
        kernel=args.kernel,
        q=args.q,
        p=args.p,
        k=args.k,
        recon_rho=args.rho,
        recon_eta=args.eta,
        recon_max_iter=args.max_iter,
        recon_tol=args.tol,
        embed_rho=args.embed_rho,
        embed_eta=args.embed_eta,
        embed_max_iter=args.embed_max_iter,
        embed_tol=args.embed_tol,
        seed=args.seed,
        exact_fit=not args.no_exact_fit,
    )


def cmd_train(args):
    config = _config_from_args(args)
    names, images, labels = dl.read_dataset(args.data)
    model = train(images, config, names=names, labels=labels)
    save_model(model, args.out)
    log.info("saved model to %s", args.out)
    return 0


def cmd_embed(args):
    model = load_model(args.model)
    names, images, labels = dl.read_dataset(args.images)
    res = embed_images(model, images)
    doc = {
        "format": "ssimm-embedding/1",
        "names": names,
        "labels": labels,
        "embeddings": encode_array(res.embeddings),
        "neighbors": encode_array(res.neighbors),
        "weights": encode_array(res.weights),
        "converged": encode_array(res.converged),
    }
    Path(args.out).write_text(dumps_json(doc))
    log.info("embedded %d images (%d blocks each) into %s", len(names), model.n_blocks, args.out)
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    out = Path(args.out)
    if np.any(model.labels < 0):
        raise ValueError("training labels are unknown; evaluation needs a manifest")
    train_ev, nn = ev.evaluate_training(model)
    perm = ev.permutation_test(nn, model.labels, draws=args.permutations, seed=model.config.seed)
    ev.write_report(train_ev, out / "train", extra={
        "permutation_p_value": perm.p_value,
        "permutation_draws": args.permutations,
        "null_mean_accuracy": float(perm.null.mean()),
    })
    log.info("training (leave-one-out): image accuracy %.3f, block accuracy %.3f, p=%.4f",
             train_ev.image_accuracy, train_ev.block_accuracy, perm.p_value)
    if args.oos:
        doc = json.loads(Path(args.oos).read_text())
        labels = np.asarray(doc["labels"])
        true = None if np.any(labels < 0) else labels
        oos_ev, _ = ev.evaluate(decode_array(doc["embeddings"]), model.embeddings, model.labels,
                                true, names=doc["names"])
        ev.write_report(oos_ev, out / "oos")
        log.info("out-of-sample: image accuracy %.3f", oos_ev.image_accuracy)
    return 0


def cmd_verify(args):
    results = run_all(args.seed)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


def build_parser():
    ap = argparse.ArgumentParser(prog="ssimm", description=__doc__)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker threads for the parallel kernels (default: SSIMM_THREADS or all)")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("-q", "--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a distorted dataset on iso-MSE levels")
    p.add_argument("--image", help="base PGM image (default: bundled 64x64 texture)")
    p.add_argument("--out", required=True)
    p.add_argument("--levels", default="45:900:45", help="lo:hi:step or a comma list of MSE values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=0.01, help="relative MSE tolerance")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="fit a model to a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=METHODS, default="llise")
    p.add_argument("--kernel", default="rbf", choices=["linear", "polynomial", "rbf", "sigmoid"])
    p.add_argument("--q", type=int, default=64)
    p.add_argument("--p", type=int, default=4)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--rho", type=float, default=None, help="reconstruction penalty")
    p.add_argument("--eta", type=float, default=None, help="reconstruction step size")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--embed-rho", type=float, default=0.01)
    p.add_argument("--embed-eta", type=float, default=0.01)
    p.add_argument("--embed-max-iter", type=int, default=5000)
    p.add_argument("--embed-tol", type=float, default=1e-5)
    p.add_argument("--no-exact-fit", action="store_true",
                   help="always iterate, even when a neighbour reproduces a block exactly")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed images out of sample")
    p.add_argument("--model", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="confusion matrices and vote tables")
    p.add_argument("--model", required=True)
    p.add_argument("--oos", help="embedding file from 'embed'")
    p.add_argument("--out", required=True)
    p.add_argument("--permutations", type=int, default=1000)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="gradient and projection self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(message)s")
    _accel.set_threads(args.threads)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
