"""Loss-distribution studies over trained models.

Every study evaluates (style, content) pairs in index order and returns a
:class:`StudyResult` whose summaries can be recomputed from its records.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..data import image_digest
from ..errors import InvalidArgument
from ..imageio import atomic_write_bytes
from ..model import StyleTransferModel
from ..tensor import Tensor
from ..training import direct_optimize, train_joint
from .stats import box_stats, linear_regression, paired_t_test, summarize

logger = logging.getLogger(__name__)

RECORD_FIELDS = ("group", "style_id", "content_id", "content_loss", "style_loss",
                 "gram_distance", "nearest_train")


@dataclass
class StudyRecord:
    group: str
    style_id: str
    content_id: str
    content_loss: float
    style_loss: float
    gram_distance: float = math.nan
    nearest_train: int = -1


@dataclass
class StudyResult:
    name: str
    records: list
    summaries: dict = field(default_factory=dict)
    regression: dict | None = None
    tests: dict = field(default_factory=dict)

    @property
    def group_sizes(self):
        return {g: s["n"] for g, s in self.summaries.items()}

    def group(self, name):
        return [r for r in self.records if r.group == name]


def summarize_records(records):
    """Per group (first-appearance order): n plus location/spread of both losses."""
    groups = {}
    for r in records:
        groups.setdefault(r.group, []).append(r)
    out = {}
    for g, rows in groups.items():
        entry = {"n": len(rows), "styles": len({r.style_id for r in rows})}
        for metric in ("content_loss", "style_loss"):
            vals = [getattr(r, metric) for r in rows]
            s = summarize(vals)
            entry[metric] = {"mean": s["mean"], "median": s["median"], "std": s["std"], **box_stats(vals)}
        out[g] = entry
    return out


def _finish(name, records, regression=None, tests=None):
    return StudyResult(name=name, records=records, summaries=summarize_records(records),
                       regression=regression, tests=dict(tests or {}))


def evaluate_pairs(model, group, styles, contents, loss_model=None):
    """One record per (style, content) pair for the stylizations of ``model``."""
    judge = loss_model or model
    records = []
    for s in styles:
        for c in contents:
            out = model.stylize(c.image, s.image)
            rep = judge.evaluate(c.image, s.image, output=out)
            records.append(StudyRecord(group, s.name, c.name, rep.content_loss, rep.style_loss))
    return records


def _require(items, what):
    if not items:
        raise InvalidArgument(f"{what} must be non-empty")


# ---------------------------------------------------------------------------

def generalization_study(model, observed, unobserved, contents):
    """Losses of T(c, P(s)) for styles seen in training versus held-out styles."""
    _require(observed, "observed styles")
    _require(unobserved, "unobserved styles")
    _require(contents, "contents")
    records = evaluate_pairs(model, "observed", observed, contents)
    records += evaluate_pairs(model, "unobserved", unobserved, contents)
    return _finish("generalization", records)


def style_grams(net, image):
    """[(Gram [C, C], units C*H*W)] for each style layer of the loss network."""
    from ..losses import gram_matrix
    from ..tensor import no_grad

    with no_grad():
        feats = net.features(Tensor(np.asarray(image, dtype=np.float64)), upto=max(net.style_layers))
        out = []
        for i in net.style_layers:
            f = feats[i]
            out.append((gram_matrix(f).data[0], f.shape[1] * f.shape[2] * f.shape[3]))
    return out


def gram_distance(grams_a, grams_b):
    """L2 distance of concatenated Gram matrices, each layer weighted by 1/units."""
    if len(grams_a) != len(grams_b):
        raise InvalidArgument("Gram lists cover different layers")
    total = 0.0
    for (ga, na), (gb, nb) in zip(grams_a, grams_b):
        if ga.shape != gb.shape or na != nb:
            raise InvalidArgument("Gram matrices of different shapes; resize styles to a common size")
        total += float(np.sum((ga - gb) ** 2)) / na
    return math.sqrt(total)


def gram_proximity_study(model, train_styles, test_styles, contents):
    """Mean style loss of each test style against its Gram distance to the nearest training style."""
    _require(train_styles, "training styles")
    _require(test_styles, "test styles")
    _require(contents, "contents")
    net = model.net
    train_grams = [style_grams(net, s.image) for s in train_styles]
    records = []
    for s in test_styles:
        g = style_grams(net, s.image)
        dists = [gram_distance(g, t) for t in train_grams]
        nearest = int(np.argmin(dists))  # first index wins ties
        pairs = evaluate_pairs(model, "test", [s], contents)
        records.append(StudyRecord("test", s.name, "mean",
                                   float(np.mean([p.content_loss for p in pairs])),
                                   float(np.mean([p.style_loss for p in pairs])),
                                   dists[nearest], nearest))
    regression = None
    x = [r.gram_distance for r in records]
    if len(records) >= 2 and len(set(x)) > 1:
        regression = linear_regression(x, [r.style_loss for r in records])
    else:
        logger.warning("proximity regression undefined: need two test styles at distinct distances")
    return _finish("proximity", records, regression=regression)


@dataclass
class ScalingResult:
    results: dict  # count -> StudyResult
    checkpoints: dict  # count -> Checkpoint

    def box_rows(self):
        rows = []
        for count, res in self.results.items():
            for group, entry in res.summaries.items():
                for metric in ("content_loss", "style_loss"):
                    st = entry[metric]
                    rows.append({"count": count, "group": group, "metric": metric, "n": entry["n"],
                                 **{k: st[k] for k in ("p10", "q25", "median", "q75", "p90", "mean")}})
        return rows


def scaling_experiment(base_config, counts, eval_styles, contents, *, train_styles, train_contents=None,
                       callback=None):
    """Train one model per style count (augmentation off) and evaluate held-out styles."""
    counts = list(counts)
    if not counts or counts != sorted(counts) or len(set(counts)) != len(counts):
        raise InvalidArgument(f"counts must be strictly ascending and non-empty, got {counts}")
    if counts[0] < 1 or counts[-1] > len(train_styles):
        raise InvalidArgument(f"counts must lie in [1, {len(train_styles)}], got {counts}")
    _require(eval_styles, "evaluation styles")
    _require(contents, "contents")
    cfg = base_config.replace(augment=False)
    results, ckpts = {}, {}
    for count in counts:
        subset = train_styles[:count]
        ckpt = train_joint(cfg, contents=train_contents or contents, styles=subset,
                           callback=callback)
        model = StyleTransferModel.from_checkpoint(ckpt)
        res = generalization_study(model, subset, eval_styles, contents)
        res.name = f"scaling/{count}"
        results[count] = res
        ckpts[count] = ckpt
        med = res.summaries["unobserved"]["style_loss"]["median"]
        logger.info("styles=%d unobserved median style loss %.5g", count, med)
    return ScalingResult(results, ckpts)


def check_disjoint(models, styles):
    """Raise if any evaluation style was part of a model's training corpus."""
    for label, model in models.items():
        seen = model.style_digests
        leaked = [s.name for s in styles if image_digest(s.image) in seen]
        if leaked:
            raise InvalidArgument(f"evaluation styles {leaked} appear in the training corpus of model {label}")


def cross_dataset_study(model_a, model_b, styles_a, styles_b, contents, names=("A", "B")):
    """Both models on both domains' held-out styles: four groups 'trained(X),test(Y)'."""
    _require(styles_a, f"test styles of {names[0]}")
    _require(styles_b, f"test styles of {names[1]}")
    _require(contents, "contents")
    models = {names[0]: model_a, names[1]: model_b}
    check_disjoint(models, list(styles_a) + list(styles_b))
    a, b = names
    records = []
    for trained, test, styles in ((a, a, styles_a), (b, a, styles_a), (b, b, styles_b), (a, b, styles_b)):
        records += evaluate_pairs(models[trained], f"trained({trained}),test({test})", styles, contents)
    return _finish("cross", records)


def baseline_comparison(model, adain_model, styles, contents, steps=200, lr=0.05):
    """Proposed method against the AdaIN and direct-optimization baselines with paired t-tests.

    All outputs are judged by ``model``'s loss network.
    """
    _require(styles, "styles")
    _require(contents, "contents")
    records = evaluate_pairs(model, "proposed", styles, contents)
    records += evaluate_pairs(adain_model, "adain", styles, contents, loss_model=model)
    for s in styles:
        for c in contents:
            best, _ = direct_optimize(c.image, s.image, model.net, model.config.lambda_s, steps, lr=lr)
            rep = model.evaluate(c.image, s.image, output=best)
            records.append(StudyRecord("direct", s.name, c.name, rep.content_loss, rep.style_loss))
    tests = {}
    prop = [r for r in records if r.group == "proposed"]
    for other in ("adain", "direct"):
        rows = [r for r in records if r.group == other]
        for metric in ("content_loss", "style_loss"):
            if len(prop) >= 2:
                t, p = paired_t_test([getattr(r, metric) for r in prop], [getattr(r, metric) for r in rows])
                tests[f"proposed-vs-{other}/{metric}"] = {"t": t, "p": p}
    return _finish("baselines", records, tests=tests)


# ---------------------------------------------------------------------------
# CSV output

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_bytes(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def records_csv(result):
    return _csv_bytes(RECORD_FIELDS, ([getattr(r, f) for f in RECORD_FIELDS] for r in result.records))


def summary_csv(result):
    """Long format: section, group, metric, statistic, value."""
    rows = []
    for g, entry in result.summaries.items():
        rows.append(("summary", g, "", "n", entry["n"]))
        rows.append(("summary", g, "", "styles", entry["styles"]))
        for metric in ("content_loss", "style_loss"):
            for stat, v in entry[metric].items():
                rows.append(("summary", g, metric, stat, v))
    if result.regression:
        for stat, v in result.regression.items():
            rows.append(("regression", "", "style_loss~gram_distance", stat, v))
    for name, tp in result.tests.items():
        for stat, v in tp.items():
            rows.append(("paired_t_test", "", name, stat, v))
    return _csv_bytes(("section", "group", "metric", "statistic", "value"), rows)


def write_study(result, out_dir, prefix=None):
    """Write ``<prefix>_records.csv`` and ``<prefix>_summary.csv``; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefix = prefix or result.name.replace("/", "_")
    rec, summ = out_dir / f"{prefix}_records.csv", out_dir / f"{prefix}_summary.csv"
    atomic_write_bytes(rec, records_csv(result))
    atomic_write_bytes(summ, summary_csv(result))
    return rec, summ


def write_scaling(scaling, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for res in scaling.results.values():
        paths.extend(write_study(res, out_dir))
    header = ("count", "group", "metric", "n", "p10", "q25", "median", "q75", "p90", "mean")
    box = out_dir / "scaling_boxes.csv"
    atomic_write_bytes(box, _csv_bytes(header, ([r[h] for h in header] for r in scaling.box_rows())))
    paths.append(box)
    return paths
