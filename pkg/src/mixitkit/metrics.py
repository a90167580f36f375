"""Evaluation: SI-SNR, off-screen suppression, weighted AUC-ROC, robust
medians, the four-set evaluation protocol, and CSV/JSON/SVG reports.

Infinite metric values are first-class here: SI-SNR is +inf for a perfect
(scaled) reconstruction and -inf for a zero or orthogonal estimate, OSR is
+inf for exact suppression. Medians treat them as order statistics, reports
serialize them as "inf"/"-inf", and scatter plots exclude them with a count
annotation.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .audio import POWER_FLOOR, Waveform, power_db
from .errors import InvalidInputError, UndefinedMetricError
from .mixit import mixit_loss
from .model.forward import model_forward

EVAL_SETS = ("on-single", "off-single", "on-MoM", "off-MoM")

CSV_COLUMNS = (
    "example_id", "eval_set", "input_sisnr_db", "mixit_star_sisnr_db",
    "xon_sisnr_db", "osr_db", "src_idx", "score", "weight", "label",
    "input_power_db",  # appended past the base schema so plots can re-emit
)


def thread_count():
    """Worker cap from MIXITKIT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("MIXITKIT_THREADS", "1")))
    except ValueError:
        return 1


def si_snr(target: Waveform, estimate: Waveform):
    """Scale-invariant SNR in dB (Waveforms of equal length).

    The estimate is compared against the least-squares scaling of the target:
    alpha = <t, t_hat> / ||t||^2. Exactly proportional estimates give +inf;
    zero or orthogonal estimates give -inf. A zero target is undefined.
    """
    if len(target) != len(estimate):
        raise InvalidInputError(f"length mismatch: {len(target)} vs {len(estimate)}")
    t, e = target.samples, estimate.samples
    t_energy = float(t @ t)
    if t_energy == 0.0:
        raise InvalidInputError("SI-SNR is undefined for a zero target")
    alpha = float(t @ e) / t_energy
    scaled = alpha * t
    num = float(scaled @ scaled)
    den = float(np.square(scaled - e).sum())
    if den == 0.0:
        return math.inf
    if num == 0.0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def osr(input_mix: Waveform, onscreen_estimate: Waveform):
    """Off-screen suppression ratio: input power over estimate power in dB.

    0 dB exactly when the estimate equals the input; +inf when the estimate
    is exactly zero (use osr_floored for the -120 dB floored variant).
    """
    if len(input_mix) != len(onscreen_estimate):
        raise InvalidInputError(
            f"length mismatch: {len(input_mix)} vs {len(onscreen_estimate)}"
        )
    if not np.any(onscreen_estimate.samples):
        return math.inf
    return power_db(input_mix) - power_db(onscreen_estimate)


def osr_floored(input_mix: Waveform, onscreen_estimate: Waveform):
    """OSR with the power floor applied to the estimate (always finite)."""
    if len(input_mix) != len(onscreen_estimate):
        raise InvalidInputError(
            f"length mismatch: {len(input_mix)} vs {len(onscreen_estimate)}"
        )
    return power_db(input_mix) - power_db(onscreen_estimate)


def isr(input_mix: Waveform, source: Waveform):
    """Input-to-source ratio: the OSR formula applied to one output source."""
    return osr(input_mix, source)


def weighted_auc_roc(scores, labels, weights=None):
    """Area under the weighted ROC curve, trapezoidal, ties as one step.

    Requires positive total weight on both classes; otherwise the metric is
    undefined and raises UndefinedMetricError.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if weights is None:
        weights = np.ones_like(scores)
    weights = np.asarray(weights, dtype=np.float64)
    if scores.shape != labels.shape or scores.shape != weights.shape:
        raise InvalidInputError("scores, labels, weights must have matching shapes")
    if np.any(weights < 0):
        raise InvalidInputError("weights must be nonnegative")
    if not np.all((labels == 0) | (labels == 1)):
        raise InvalidInputError("labels must be binary")
    pos_total = float(weights[labels == 1].sum())
    neg_total = float(weights[labels == 0].sum())
    if pos_total == 0.0 or neg_total == 0.0:
        raise UndefinedMetricError(
            "weighted AUC needs positive weight in both classes "
            f"(positives {pos_total}, negatives {neg_total})"
        )
    order = np.argsort(-scores, kind="stable")
    s, y, w = scores[order], labels[order], weights[order]
    area = 0.0
    tp = fp = 0.0
    i = 0
    n = len(s)
    while i < n:
        j = i
        dtp = dfp = 0.0
        while j < n and s[j] == s[i]:  # equal scores form one threshold step
            if y[j] == 1:
                dtp += w[j]
            else:
                dfp += w[j]
            j += 1
        prev_tpr, prev_fpr = tp / pos_total, fp / neg_total
        tp += dtp
        fp += dfp
        tpr, fpr = tp / pos_total, fp / neg_total
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0
        i = j
    return float(area)


def median_robust(values):
    """Median with +-inf as order statistics.

    Odd count: the middle value. Even count: the mean of the two middle
    values when both are finite, else the lower one (so no inf arithmetic).
    """
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise InvalidInputError("median of an empty sequence")
    if n % 2 == 1:
        return ordered[n // 2]
    lo, hi = ordered[n // 2 - 1], ordered[n // 2]
    if math.isfinite(lo) and math.isfinite(hi):
        return (lo + hi) / 2.0
    return lo


@dataclass
class EvalRecord:
    """Per-example metrics row; per-source (score, weight, label) triples."""

    example_id: str
    eval_set: str
    input_sisnr_db: float = None
    mixit_star_sisnr_db: float = None
    xon_sisnr_db: float = None
    osr_db: float = None
    osr_floored_db: float = None
    input_power_db: float = 0.0
    sources: list = field(default_factory=list)


@dataclass
class MetricSummary:
    eval_set: str
    count: int
    auc: float = None
    median_input_sisnr_db: float = None
    median_mixit_star_sisnr_db: float = None
    median_xon_sisnr_db: float = None
    median_osr_db: float = None
    median_osr_floored_db: float = None
    inf_counts: dict = field(default_factory=dict)


def _count_infs(values):
    return {
        "pos_inf": sum(1 for v in values if v == math.inf),
        "neg_inf": sum(1 for v in values if v == -math.inf),
    }


def evaluate_example(params, sep_cfg, emb_cfg, example, eval_set, example_id,
                     mean_pooling=False, joint_flow=False, probs_fn=None):
    """Metrics for one example. probs_fn optionally overrides the classifier
    (given the example and the MixIT result, return per-source probabilities)."""
    stack, preds, _ = model_forward(params, sep_cfg, emb_cfg, example,
                                    mean_pooling=mean_pooling, joint_flow=joint_flow)
    mixture = example.mixture()
    mix_result = mixit_loss(example.x1, example.x2, stack)
    probs = np.asarray(probs_fn(example, stack, mix_result) if probs_fn is not None
                       else preds.y_hat, dtype=np.float64)
    xon_hat = Waveform(probs @ stack.sources, mixture.sample_rate)

    onscreen = eval_set.startswith("on")
    if onscreen:
        labels = (mix_result.assignment.top_row() if eval_set == "on-MoM"
                  else np.ones(stack.num_sources, dtype=np.int64))
    else:
        labels = np.zeros(stack.num_sources, dtype=np.int64)
    input_power = power_db(mixture)
    weights = [
        (float(np.mean(np.square(stack.sources[m]))) + POWER_FLOOR)
        / (float(np.mean(np.square(mixture.samples))) + POWER_FLOOR)
        for m in range(stack.num_sources)
    ]
    record = EvalRecord(
        example_id=example_id,
        eval_set=eval_set,
        input_power_db=input_power,
        sources=[(float(probs[m]), weights[m], int(labels[m]))
                 for m in range(stack.num_sources)],
    )
    if onscreen:
        record.input_sisnr_db = si_snr(example.on_ref, mixture)
        record.mixit_star_sisnr_db = si_snr(example.on_ref, mix_result.remix_top)
        record.xon_sisnr_db = si_snr(example.on_ref, xon_hat)
    else:
        record.osr_db = osr(mixture, xon_hat)
        record.osr_floored_db = osr_floored(mixture, xon_hat)
    return record


def evaluate_model(params, sep_cfg, emb_cfg, eval_sets, mean_pooling=False,
                   joint_flow=False, probs_fn=None):
    """Records plus per-set summaries over the four evaluation sets.

    ``eval_sets`` maps the four set names to example lists; all must be
    nonempty. AUC is computed per column pair (single sets together, MoM sets
    together) and attached to both summaries of the pair; when a pair ends up
    single-class (degenerate separations) its AUC is left as None.
    """
    for name in EVAL_SETS:
        if not eval_sets.get(name):
            raise UndefinedMetricError(f"evaluation set {name!r} is missing or empty")

    jobs = []
    for name in EVAL_SETS:
        for i, example in enumerate(eval_sets[name]):
            jobs.append((name, f"{name}-{i:04d}", example))

    def run(job):
        name, example_id, example = job
        return evaluate_example(params, sep_cfg, emb_cfg, example, name, example_id,
                                mean_pooling=mean_pooling, joint_flow=joint_flow,
                                probs_fn=probs_fn)

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, jobs))
    else:
        records = [run(job) for job in jobs]

    by_set = {name: [r for r in records if r.eval_set == name] for name in EVAL_SETS}
    aucs = {}
    for pair_name, members in (("single", ("on-single", "off-single")),
                               ("mom", ("on-MoM", "off-MoM"))):
        scores, labels, weights = [], [], []
        for name in members:
            for r in by_set[name]:
                for score, weight, label in r.sources:
                    scores.append(score)
                    labels.append(label)
                    weights.append(weight)
        try:
            aucs[pair_name] = weighted_auc_roc(scores, labels, weights)
        except UndefinedMetricError:
            aucs[pair_name] = None

    summaries = {}
    for name in EVAL_SETS:
        rows = by_set[name]
        summary = MetricSummary(eval_set=name, count=len(rows),
                                auc=aucs["single" if "single" in name else "mom"])
        if name.startswith("on"):
            inputs = [r.input_sisnr_db for r in rows]
            stars = [r.mixit_star_sisnr_db for r in rows]
            xons = [r.xon_sisnr_db for r in rows]
            summary.median_input_sisnr_db = median_robust(inputs)
            summary.median_mixit_star_sisnr_db = median_robust(stars)
            summary.median_xon_sisnr_db = median_robust(xons)
            summary.inf_counts = {
                "input_sisnr_db": _count_infs(inputs),
                "mixit_star_sisnr_db": _count_infs(stars),
                "xon_sisnr_db": _count_infs(xons),
            }
        else:
            osrs = [r.osr_db for r in rows]
            summary.median_osr_db = median_robust(osrs)
            summary.median_osr_floored_db = median_robust([r.osr_floored_db for r in rows])
            summary.inf_counts = {"osr_db": _count_infs(osrs)}
        summaries[name] = summary
    return records, summaries


def _fmt(value):
    if value is None:
        return ""
    if value == math.inf:
        return "inf"
    if value == -math.inf:
        return "-inf"
    return repr(float(value))


def _json_safe(obj):
    if isinstance(obj, float):
        if obj == math.inf:
            return "inf"
        if obj == -math.inf:
            return "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def records_to_csv(records):
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        for src_idx, (score, weight, label) in enumerate(r.sources):
            lines.append(",".join([
                r.example_id, r.eval_set, _fmt(r.input_sisnr_db),
                _fmt(r.mixit_star_sisnr_db), _fmt(r.xon_sisnr_db), _fmt(r.osr_db),
                str(src_idx), _fmt(score), _fmt(weight), str(label),
                _fmt(r.input_power_db),
            ]))
    return "\n".join(lines) + "\n"


def _parse_cell(cell):
    if cell == "":
        return None
    if cell == "inf":
        return math.inf
    if cell == "-inf":
        return -math.inf
    return float(cell)


def records_from_csv(text):
    """Inverse of records_to_csv (same example grouping, sources in order)."""
    lines = [ln for ln in text.splitlines() if ln]
    header = lines[0].split(",")
    if list(header) != list(CSV_COLUMNS):
        raise InvalidInputError(f"unexpected CSV header: {header}")
    records = {}
    for ln in lines[1:]:
        cells = ln.split(",")
        key = cells[0]
        if key not in records:
            records[key] = EvalRecord(
                example_id=cells[0], eval_set=cells[1],
                input_sisnr_db=_parse_cell(cells[2]),
                mixit_star_sisnr_db=_parse_cell(cells[3]),
                xon_sisnr_db=_parse_cell(cells[4]),
                osr_db=_parse_cell(cells[5]),
                input_power_db=_parse_cell(cells[10]),
            )
        records[key].sources.append(
            (_parse_cell(cells[7]), _parse_cell(cells[8]), int(cells[9])))
    return list(records.values())


def _svg_scatter(points, excluded, title, x_label, y_label):
    """A dependency-free scatter plot. Deterministic output for fixed input."""
    width, height, margin = 640, 480, 60
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]
    if points:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        x_lo, x_hi = min(xs), max(xs)
        y_lo, y_hi = min(ys), max(ys)
        x_span = (x_hi - x_lo) or 1.0
        y_span = (y_hi - y_lo) or 1.0

        def sx(x):
            return margin + (x - x_lo) / x_span * (width - 2 * margin)

        def sy(y):
            return height - margin - (y - y_lo) / y_span * (height - 2 * margin)

        parts.append(
            f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
            f'y2="{height - margin}" stroke="black"/>')
        parts.append(
            f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
            f'y2="{height - margin}" stroke="black"/>')
        for label, x in ((f"{x_lo:.4g}", margin), (f"{x_hi:.4g}", width - margin)):
            parts.append(f'<text x="{x}" y="{height - margin + 20}" text-anchor="middle" '
                         f'font-size="11">{label}</text>')
        for label, y in ((f"{y_lo:.4g}", height - margin), (f"{y_hi:.4g}", margin)):
            parts.append(f'<text x="{margin - 8}" y="{y + 4}" text-anchor="end" '
                         f'font-size="11">{label}</text>')
        for x, y in points:
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" '
                         f'fill="steelblue" fill-opacity="0.6"/>')
    parts.append(
        f'<text x="{width // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{x_label} vs {y_label}; {len(points)} points, '
        f'{excluded} non-finite excluded</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_scatter_svgs(records):
    """The two report scatters: (input SI-SNR, on-screen SI-SNR) over on-screen
    examples and (mixture power dB, OSR) over off-screen examples."""
    sisnr_points, sisnr_excluded = [], 0
    osr_points, osr_excluded = [], 0
    for r in records:
        if r.eval_set.startswith("on"):
            if (r.input_sisnr_db is not None and r.xon_sisnr_db is not None
                    and math.isfinite(r.input_sisnr_db) and math.isfinite(r.xon_sisnr_db)):
                sisnr_points.append((r.input_sisnr_db, r.xon_sisnr_db))
            else:
                sisnr_excluded += 1
        else:
            if r.osr_db is not None and math.isfinite(r.osr_db):
                osr_points.append((r.input_power_db, r.osr_db))
            else:
                osr_excluded += 1
    return {
        "scatter_sisnr.svg": _svg_scatter(
            sisnr_points, sisnr_excluded, "On-screen reconstruction",
            "input SI-SNR (dB)", "on-screen estimate SI-SNR (dB)"),
        "scatter_osr.svg": _svg_scatter(
            osr_points, osr_excluded, "Off-screen suppression",
            "mixture power (dB)", "OSR (dB)"),
    }


def emit_report(records, summaries, out_dir):
    """Write records.csv, summary.json, and the two scatter SVGs.

    Fully deterministic: rerunning on the same records reproduces identical
    bytes. Returns the list of paths written.
    """
    if not records:
        raise InvalidInputError("emit_report needs at least one record")
    os.makedirs(out_dir, exist_ok=True)
    paths = []

    csv_path = os.path.join(out_dir, "records.csv")
    with open(csv_path, "w") as f:
        f.write(records_to_csv(records))
    paths.append(csv_path)

    summary_payload = {
        name: _json_safe({k: v for k, v in vars(summary).items()})
        for name, summary in summaries.items()
    }
    json_path = os.path.join(out_dir, "summary.json")
    with open(json_path, "w") as f:
        json.dump(summary_payload, f, indent=2, sort_keys=True)
        f.write("\n")
    paths.append(json_path)

    for name, svg in render_scatter_svgs(records).items():
        svg_path = os.path.join(out_dir, name)
        with open(svg_path, "w") as f:
            f.write(svg)
        paths.append(svg_path)
    return paths
