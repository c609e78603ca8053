"""Command-line entry point: ``python -m arbstyle <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import (
    ConfigError,
    FormatError,
    GradCheckFailure,
    IntegrityError,
    InvalidArgument,
    NonFiniteError,
    VersionError,
)

logger = logging.getLogger("arbstyle")

CONFIG_ENV = "ARBSTYLE_CONFIG"
COMMANDS = ("train", "train-adain", "stylize", "embed", "interpolate", "optimize",
            "study-generalization", "study-proximity", "study-scaling", "study-cross",
            "pca-grid", "tsne", "grad-check")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        flags = sorted({s for a in self._actions for s in a.option_strings})
        raise UsageError(f"{self.prog}: {message}\nvalid flags: {' '.join(flags)}")


# ---------------------------------------------------------------------------
# helpers

class _Paths:
    """Tracks inputs so that no output can clobber one."""

    def __init__(self):
        self.inputs = set()

    def read(self, path):
        p = Path(path)
        self.inputs.add(p.resolve())
        return p

    def read_dir(self, path):
        p = self.read(path)
        if p.is_dir():
            for child in p.iterdir():
                self.inputs.add(child.resolve())
        return p

    def write(self, path):
        p = Path(path)
        if p.resolve() in self.inputs:
            raise UsageError(f"output {p} would overwrite an input file")
        return p


def _config(args):
    path = args.config or os.environ.get(CONFIG_ENV)
    if path:
        args.paths.read(path)
        return load_config(path)
    return RunConfig()


def _load_model(args, path):
    from .checkpoint import load_checkpoint
    from .model import StyleTransferModel

    return StyleTransferModel.from_checkpoint(load_checkpoint(args.paths.read(path)))


def _image(args, path, size=None):
    from .data import resize_bilinear
    from .imageio import load_image

    img = load_image(args.paths.read(path))
    return resize_bilinear(img, size, size) if size else img


def _corpus(args, path, size, limit=None):
    from .data import load_corpus

    if not path:
        raise InvalidArgument("a corpus directory is required")
    samples = load_corpus(args.paths.read_dir(path), size)
    return samples[:limit] if limit else samples


def _save(args, image, path):
    from .imageio import save_image

    out = args.paths.write(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_image(image, out)
    return out


def _out_dir(args, path):
    d = Path(path)
    if d.resolve() in args.paths.inputs:
        raise UsageError(f"output directory {d} is an input")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _check_outputs(args, paths):
    for p in paths:
        args.paths.write(p)


# ---------------------------------------------------------------------------
# commands

def cmd_train(args, adain=False):
    from .checkpoint import write_checkpoint
    from .training import train_adain_baseline, train_joint, write_trace

    cfg = _config(args)
    changes = {}
    if args.steps is not None:
        changes["budget"] = args.steps
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.content_dir:
        changes["content_corpus"] = str(args.paths.read_dir(args.content_dir))
    if args.style_dir:
        changes["style_corpus"] = str(args.paths.read_dir(args.style_dir))
    cfg = cfg.replace(**changes)
    for d in (cfg.content_corpus, cfg.style_corpus):
        if d:
            args.paths.read_dir(d)
    out = args.paths.write(args.out)
    trace_path = args.paths.write(args.trace) if args.trace else None
    ckpt = (train_adain_baseline if adain else train_joint)(cfg)
    write_checkpoint(ckpt, out)
    if trace_path:
        write_trace(ckpt.trace, trace_path)
    first, last = ckpt.trace[0][3], ckpt.trace[-1][3]
    print(f"trained {len(ckpt.trace)} steps: total loss {first:.6g} -> {last:.6g}; wrote {out}")
    return 0


def _read_embedding(args, path):
    from .checkpoint import decode_tensors

    _, tensors = decode_tensors(args.paths.read(path).read_bytes())
    if "embedding" not in tensors:
        raise FormatError(f"{path} holds no 'embedding' tensor", 0)
    return np.asarray(tensors["embedding"], dtype=np.float64)


def cmd_stylize(args):
    model = _load_model(args, args.checkpoint)
    content = _image(args, args.content, args.size)
    out = args.paths.write(args.out)
    if args.embedding:
        emb = _read_embedding(args, args.embedding)
        image = model.render(content, emb.reshape(1, -1))
    elif args.style:
        image = model.stylize(content, _image(args, args.style, model.config.style_size))
    else:
        raise UsageError("stylize needs --style or --embedding")
    _save(args, image, out)
    print(f"wrote {out}")
    return 0


def cmd_embed(args):
    from .checkpoint import encode_tensors
    from .imageio import atomic_write_bytes

    model = _load_model(args, args.checkpoint)
    style = _image(args, args.style, model.config.style_size)
    out = args.paths.write(args.out)
    emb, z = model.embed(style, return_bottleneck=True)
    tensors = {"embedding": emb[0], "bottleneck": z[0]}
    atomic_write_bytes(out, encode_tensors(model.config.serialize(), tensors))
    print(f"embedding dim {emb.shape[1]}; wrote {out}")
    return 0


def cmd_interpolate(args):
    from .analysis.embedding import identity_embedding, interpolate_embedding

    if args.alpha_steps < 1:
        raise UsageError("--alpha-steps must be >= 1")
    model = _load_model(args, args.checkpoint)
    content = _image(args, args.content, args.size)
    style = _image(args, args.style, model.config.style_size)
    out_dir = _out_dir(args, args.out_dir)
    k = args.alpha_steps
    width = max(3, len(str(k)))
    paths = [out_dir / f"interp_{i:0{width}d}.{args.format}" for i in range(k + 1)]
    _check_outputs(args, paths)
    S_id = identity_embedding(content, model)
    S_style = model.embed(style)
    for i, path in enumerate(paths):
        S = interpolate_embedding(S_id, S_style, i / k)
        _save(args, model.render(content, S.values.data), path)
    err = float(np.sqrt(np.mean((model.render(content, S_id.values.data) - content) ** 2)))
    print(f"wrote {len(paths)} images to {out_dir}; identity reconstruction rms error {err:.4g}")
    return 0


def cmd_optimize(args):
    from .training import direct_optimize, loss_network_for, write_trace

    cfg = _config(args)
    size = args.size or cfg.image_size
    content = _image(args, args.content, size)
    style = _image(args, args.style, cfg.style_size)
    out = args.paths.write(args.out)
    trace_path = args.paths.write(args.trace) if args.trace else None
    steps = args.steps or cfg.optimize_steps
    best, trace = direct_optimize(content, style, loss_network_for(cfg), cfg.lambda_s, steps,
                                  lr=args.lr or cfg.optimize_lr)
    _save(args, best, out)
    if trace_path:
        write_trace([row[:4] for row in trace], trace_path)
    print(f"best total loss {trace[-1][4]:.6g} (initial {trace[0][3]:.6g}); wrote {out}")
    return 0


def _contents(args, model_or_cfg):
    cfg = getattr(model_or_cfg, "config", model_or_cfg)
    n = args.photographs or cfg.photographs
    return _corpus(args, args.content_dir or cfg.content_corpus, cfg.image_size, n)


def cmd_study_generalization(args):
    from .analysis.studies import generalization_study, write_study

    model = _load_model(args, args.checkpoint)
    cfg = model.config
    observed = _corpus(args, args.observed_dir or cfg.style_corpus, cfg.style_size)
    unobserved = _corpus(args, args.unobserved_dir, cfg.style_size)
    contents = _contents(args, model)
    out_dir = _out_dir(args, args.out_dir)
    _check_outputs(args, [out_dir / "generalization_records.csv", out_dir / "generalization_summary.csv"])
    res = generalization_study(model, observed, unobserved, contents)
    paths = write_study(res, out_dir)
    print(f"wrote {', '.join(map(str, paths))}")
    return 0


def cmd_study_proximity(args):
    from .analysis.studies import gram_proximity_study, write_study

    model = _load_model(args, args.checkpoint)
    cfg = model.config
    train = _corpus(args, args.train_dir or cfg.style_corpus, cfg.style_size)
    test = _corpus(args, args.test_dir, cfg.style_size)
    contents = _contents(args, model)
    out_dir = _out_dir(args, args.out_dir)
    _check_outputs(args, [out_dir / "proximity_records.csv", out_dir / "proximity_summary.csv"])
    res = gram_proximity_study(model, train, test, contents)
    paths = write_study(res, out_dir)
    if res.regression:
        r = res.regression
        print(f"slope {r['slope']:.6g} intercept {r['intercept']:.6g} r2 {r['r2']:.4f}")
    print(f"wrote {', '.join(map(str, paths))}")
    return 0


def cmd_study_scaling(args):
    from .analysis.studies import scaling_experiment, write_scaling
    from .checkpoint import write_checkpoint

    cfg = _config(args)
    if args.steps is not None:
        cfg = cfg.replace(budget=args.steps)
    try:
        counts = [int(x) for x in args.counts.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--counts must be comma-separated integers, got {args.counts!r}") from None
    train = _corpus(args, args.train_dir or cfg.style_corpus, cfg.style_size)
    evals = _corpus(args, args.eval_dir, cfg.style_size)
    train_contents = _corpus(args, args.content_dir or cfg.content_corpus, cfg.image_size)
    contents = train_contents[:args.photographs or cfg.photographs]
    out_dir = _out_dir(args, args.out_dir)
    ckpt_paths = {}
    if args.checkpoint_dir:
        ckpt_dir = _out_dir(args, args.checkpoint_dir)
        ckpt_paths = {n: ckpt_dir / f"scaling_{n}.nstc" for n in counts}
        _check_outputs(args, ckpt_paths.values())
    res = scaling_experiment(cfg, counts, evals, contents, train_styles=train, train_contents=train_contents)
    paths = write_scaling(res, out_dir)
    for n, path in ckpt_paths.items():
        write_checkpoint(res.checkpoints[n], path)
        paths.append(path)
    for row in res.box_rows():
        if row["group"] == "unobserved" and row["metric"] == "style_loss":
            print(f"styles={row['count']}: unobserved style loss median {row['median']:.6g} "
                  f"[q25 {row['q25']:.6g}, q75 {row['q75']:.6g}]")
    print(f"wrote {len(paths)} files to {out_dir}")
    return 0


def cmd_study_cross(args):
    from .analysis.studies import cross_dataset_study, write_study

    model_a = _load_model(args, args.checkpoint_a)
    model_b = _load_model(args, args.checkpoint_b)
    cfg = model_a.config
    styles_a = _corpus(args, args.test_a, cfg.style_size)
    styles_b = _corpus(args, args.test_b, cfg.style_size)
    contents = _contents(args, model_a)
    out_dir = _out_dir(args, args.out_dir)
    _check_outputs(args, [out_dir / "cross_records.csv", out_dir / "cross_summary.csv"])
    res = cross_dataset_study(model_a, model_b, styles_a, styles_b, contents, names=(args.name_a, args.name_b))
    paths = write_study(res, out_dir)
    print(f"wrote {', '.join(map(str, paths))}")
    return 0


def cmd_pca_grid(args):
    from .analysis.embedding import pca_grid_stylize

    model = _load_model(args, args.checkpoint)
    styles = _corpus(args, args.style_dir, model.config.style_size)
    content = _image(args, args.content, args.size)
    out_dir = _out_dir(args, args.out_dir)
    n = args.grid_n or model.config.grid_n
    paths = [[out_dir / f"grid_{i:02d}_{j:02d}.{args.format}" for j in range(n)] for i in range(n)]
    _check_outputs(args, [p for row in paths for p in row])
    embeddings = [model.embed(s.image)[0] for s in styles]
    k_std = model.config.k_std if args.k_std is None else args.k_std
    images, _ = pca_grid_stylize(embeddings, content, model, k_std=k_std, grid_n=n)
    for i in range(n):
        for j in range(n):
            _save(args, images[i][j], paths[i][j])
    print(f"wrote {n}x{n} grid to {out_dir}")
    return 0


def cmd_tsne(args):
    import csv
    import io

    from .analysis.tsne import tsne
    from .imageio import atomic_write_bytes

    model = _load_model(args, args.checkpoint)
    styles = _corpus(args, args.style_dir, model.config.style_size)
    out = args.paths.write(args.out)
    vecs = []
    for s in styles:
        emb, z = model.embed(s.image, return_bottleneck=True)
        vecs.append(z[0] if args.space == "bottleneck" else emb[0])
    perplexity = args.perplexity or min(model.config.tsne_perplexity, len(vecs) - 1)
    res = tsne(np.array(vecs), perplexity=perplexity, iters=args.iters or model.config.tsne_iters,
               rng=np.random.default_rng(args.seed))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("style_id", "x", "y"))
    for s, (x, y) in zip(styles, res.layout):
        w.writerow((s.name, repr(float(x)), repr(float(y))))
    atomic_write_bytes(out, buf.getvalue().encode("utf-8"))
    print(f"KL {res.kl_trace[0]:.4g} -> {res.kl_trace[-1]:.4g}; wrote {out}")
    return 0


def cmd_grad_check(args):
    from .gradcheck import check_end_to_end, check_primitives

    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        prim = check_primitives(seed)
        e2e = check_end_to_end(seed)
        worst = max(worst, e2e, *prim.values())
        logger.info("seed %d: primitives %.3g, end-to-end %.3g", seed, max(prim.values()), e2e)
    ok = worst <= args.tol
    print(f"max relative error {worst:.3g} over {args.seeds} seeds ({'ok' if ok else 'FAILED'}, tol {args.tol:g})")
    if not ok:
        raise GradCheckFailure(f"gradient check failed: {worst:.3g} > {args.tol:g}")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser():
    parser = _Parser(prog="arbstyle", description="Arbitrary style transfer with a style prediction network.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True
    subs = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help=f"run configuration file (default: ${CONFIG_ENV})")
        subs[name] = p
        return p

    def image_format(p):
        p.add_argument("--format", choices=("png", "ppm"), default="png")

    for name, adain in (("train", False), ("train-adain", True)):
        p = add(name, lambda a, adain=adain: cmd_train(a, adain),
                "train the AdaIN decoder baseline" if adain else "train the prediction and transfer networks")
        p.add_argument("--content-dir")
        p.add_argument("--style-dir")
        p.add_argument("--steps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--trace", help="loss trace CSV")

    p = add("stylize", cmd_stylize, "render a content image in the style of an image or embedding")
    p.add_argument("--content", required=True)
    p.add_argument("--style")
    p.add_argument("--embedding", help="embedding file written by 'embed'")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, help="resize content to SIZE x SIZE")

    p = add("embed", cmd_embed, "write the style embedding of an image")
    p.add_argument("--style", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)

    p = add("interpolate", cmd_interpolate, "blend from the identity embedding to a style embedding")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--alpha-steps", type=int, default=4)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--size", type=int)
    image_format(p)

    p = add("optimize", cmd_optimize, "optimize the pixels of one image directly")
    p.add_argument("--content", required=True)
    p.add_argument("--style", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--size", type=int)
    p.add_argument("--trace")

    def study(p):
        p.add_argument("--content-dir")
        p.add_argument("--photographs", type=int, help="number of content images")
        p.add_argument("--out-dir", required=True)

    p = add("study-generalization", cmd_study_generalization, "losses on observed versus unobserved styles")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--observed-dir")
    p.add_argument("--unobserved-dir", required=True)
    study(p)

    p = add("study-proximity", cmd_study_proximity, "style loss against Gram distance to the training set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train-dir")
    p.add_argument("--test-dir", required=True)
    study(p)

    p = add("study-scaling", cmd_study_scaling, "train on growing style counts and evaluate held-out styles")
    p.add_argument("--counts", default="1,2,4,8")
    p.add_argument("--train-dir")
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--checkpoint-dir", help="also save the model trained for each count")
    study(p)

    p = add("study-cross", cmd_study_cross, "two models evaluated on each other's style domains")
    p.add_argument("--checkpoint-a", required=True)
    p.add_argument("--checkpoint-b", required=True)
    p.add_argument("--test-a", required=True)
    p.add_argument("--test-b", required=True)
    p.add_argument("--name-a", default="A")
    p.add_argument("--name-b", default="B")
    study(p)

    p = add("pca-grid", cmd_pca_grid, "stylize along the top two principal components of a style set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style-dir", required=True)
    p.add_argument("--content", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--k-std", type=float)
    p.add_argument("--size", type=int)
    image_format(p)

    p = add("tsne", cmd_tsne, "2-d t-SNE map of style embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--style-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--space", choices=("embedding", "bottleneck"), default="embedding")
    p.add_argument("--perplexity", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = add("grad-check", cmd_grad_check, "finite-difference check of all gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--tol", type=float, default=1e-4)
    return parser, subs


RUNTIME_ERRORS = (InvalidArgument, FormatError, IntegrityError, VersionError, ConfigError, NonFiniteError,
                  GradCheckFailure, ArithmeticError, ValueError, OSError)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra:
            subs[args.command].error(f"unrecognized arguments: {' '.join(extra)}")
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.paths = _Paths()
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
