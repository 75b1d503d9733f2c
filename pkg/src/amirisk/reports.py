"""Text renderings of the result tables (CSV for machines, markdown for
humans).  All report numbers are recomputed from the result matrix, so a
matrix CSV alone is enough to regenerate every table."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from . import stats
from .datamodel import NUMERIC, CohortSummary
from .importance import ImportanceReport
from .metrics import METRIC_NAMES
from .tuning import DISPLAY_NAMES, CvResultMatrix


def write_text_atomic(path, text: str) -> None:
    """Write via a temp file + rename so crashes never leave truncated files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _fmt_p(p: float) -> str:
    if math.isnan(p):
        return "n/a"
    if p < 0.001:
        return "<0.001"
    return f"{p:.3f}"


def _fmt_value(v: float, decimals: int = 3) -> str:
    return "n/a" if math.isnan(v) else f"{v:.{decimals}f}"


# ---------------------------------------------------------------------------
# cohort summary
# ---------------------------------------------------------------------------

def cohort_summary_markdown(summary: CohortSummary) -> str:
    lines = [
        f"| Variable | Died (n={summary.n_died}) | "
        f"Survived (n={summary.n_survived}) | p-value | |",
        "|---|---|---|---|---|",
    ]
    for row in summary.rows:
        if row.kind == NUMERIC:
            died = f"{row.died[0]:.1f} ({row.died[1]:.1f})"
            surv = f"{row.survived[0]:.1f} ({row.survived[1]:.1f})"
        else:
            died = f"{row.died[0]:.0f} ({row.died[1]:.0f}%)"
            surv = f"{row.survived[0]:.0f} ({row.survived[1]:.0f}%)"
        star = "*" if row.significant else ""
        lines.append(
            f"| {row.name} | {died} | {surv} | {_fmt_p(row.test.p_value)} | {star} |"
        )
    lines.append("")
    lines.append("Mean (sd) for numeric variables, n (%) for binary variables; "
                 "t-test / chi-square p-values, * marks p < 0.05.")
    return "\n".join(lines) + "\n"


def cohort_summary_csv(summary: CohortSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([
        "feature", "kind", "died_mean_or_count", "died_sd_or_pct",
        "survived_mean_or_count", "survived_sd_or_pct",
        "p_value", "significant",
    ])
    for row in summary.rows:
        writer.writerow([
            row.name, row.kind,
            repr(row.died[0]), repr(row.died[1]),
            repr(row.survived[0]), repr(row.survived[1]),
            repr(row.test.p_value), int(row.significant),
        ])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# CV summary tables
# ---------------------------------------------------------------------------

def _metric_cell(matrix: CvResultMatrix, model: str, experiment: str,
                 metric: str, split: str) -> str:
    mean, sd = matrix.summary(model, experiment, metric, split)
    if math.isnan(mean):
        return "n/a"
    if metric == "auc":
        return f"{mean:.2f} ± {sd:.2f}"
    return f"{100 * mean:.0f} ± {100 * sd:.0f} %"


def _stars_vs_baseline(matrix: CvResultMatrix, model: str, baseline: str,
                       experiment: str, metric: str, split: str) -> str:
    a = matrix.metric_vector(model, experiment, metric, split)
    b = matrix.metric_vector(baseline, experiment, metric, split)
    if a.size != b.size or a.size < 2:
        return ""
    ok = ~(np.isnan(a) | np.isnan(b))
    if ok.sum() < 2:
        return ""
    return stats.paired_t_test(a[ok], b[ok]).stars


def summary_markdown(matrix: CvResultMatrix, experiment: str,
                     split: str = "test", baseline: str = "lr") -> str:
    models = [m for m in matrix.models() if matrix.keys_for(m, experiment)]
    with_stars = baseline in models and split == "test"
    lines = [
        "| Model | AUC | Accuracy | Sensitivity | Specificity | Precision |",
        "|---|---|---|---|---|---|",
    ]
    for model in models:
        cells = []
        for metric in METRIC_NAMES:
            text = _metric_cell(matrix, model, experiment, metric, split)
            if with_stars and model != baseline:
                star = _stars_vs_baseline(matrix, model, baseline,
                                          experiment, metric, split)
                if star:
                    text += f" {star}"
            cells.append(text)
        lines.append(f"| {DISPLAY_NAMES.get(model, model)} | " + " | ".join(cells) + " |")
    lines.append("")
    if with_stars:
        lines.append("Mean ± sd over (repeat, fold) cells; *, **, *** mark "
                     "paired-t p < 0.05, 0.01, 0.001 against the LR baseline.")
    else:
        lines.append("Mean ± sd over (repeat, fold) cells.")
    return "\n".join(lines) + "\n"


def summary_csv(matrix: CvResultMatrix, experiment: str,
                split: str = "test", baseline: str = "lr") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for metric in METRIC_NAMES:
        header += [f"{metric}_mean", f"{metric}_sd", f"{metric}_p_vs_{baseline}"]
    writer.writerow(header)
    models = [m for m in matrix.models() if matrix.keys_for(m, experiment)]
    for model in models:
        row = [model]
        for metric in METRIC_NAMES:
            mean, sd = matrix.summary(model, experiment, metric, split)
            p = math.nan
            if baseline in models and model != baseline and split == "test":
                a = matrix.metric_vector(model, experiment, metric, split)
                b = matrix.metric_vector(baseline, experiment, metric, split)
                ok = ~(np.isnan(a) | np.isnan(b))
                if ok.sum() >= 2:
                    p = stats.paired_t_test(a[ok], b[ok]).p_value
            row += [repr(mean), repr(sd), repr(p)]
        writer.writerow(row)
    return buf.getvalue()


def ablation_markdown(matrix: CvResultMatrix, split: str = "test") -> str:
    """Side-by-side experiment comparison with paired-t stars per model
    and metric on the with/without-biomarker contrast."""
    lines = [
        "| Experiment | Model | AUC | Accuracy | Sensitivity | Specificity | Precision |",
        "|---|---|---|---|---|---|---|",
    ]
    models = matrix.models()
    for experiment in ("I", "II"):
        label = ("Experiment I (all features)" if experiment == "I"
                 else "Experiment II (bET & bPEP excluded)")
        for model in models:
            if not matrix.keys_for(model, experiment):
                continue
            cells = []
            for metric in METRIC_NAMES:
                text = _metric_cell(matrix, model, experiment, metric, split)
                if experiment == "I" and matrix.keys_for(model, "II"):
                    a = matrix.metric_vector(model, "I", metric, split)
                    b = matrix.metric_vector(model, "II", metric, split)
                    ok = ~(np.isnan(a) | np.isnan(b))
                    if ok.sum() >= 2 and a.size == b.size:
                        star = stats.paired_t_test(a[ok], b[ok]).stars
                        if star:
                            text += f" {star}"
                cells.append(text)
            lines.append(f"| {label} | {DISPLAY_NAMES.get(model, model)} | "
                         + " | ".join(cells) + " |")
    lines.append("")
    lines.append("Stars on Experiment I rows mark paired-t significance of the "
                 "Experiment I vs II difference (same folds).")
    return "\n".join(lines) + "\n"


def ablation_csv(matrix: CvResultMatrix, split: str = "test") -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["model"]
    for metric in METRIC_NAMES:
        header += [f"{metric}_exp1", f"{metric}_exp2", f"{metric}_p_diff"]
    writer.writerow(header)
    for model in matrix.models():
        row = [model]
        for metric in METRIC_NAMES:
            m1, _ = matrix.summary(model, "I", metric, split)
            m2, _ = matrix.summary(model, "II", metric, split)
            p = math.nan
            a = matrix.metric_vector(model, "I", metric, split)
            b = matrix.metric_vector(model, "II", metric, split)
            if a.size == b.size and a.size >= 2:
                ok = ~(np.isnan(a) | np.isnan(b))
                if ok.sum() >= 2:
                    p = stats.paired_t_test(a[ok], b[ok]).p_value
            row += [repr(m1), repr(m2), repr(p)]
        writer.writerow(row)
    return buf.getvalue()


def roc_points_csv(points: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fpr", "tpr"])
    for fpr, tpr in points:
        writer.writerow([repr(float(fpr)), repr(float(tpr))])
    return buf.getvalue()


def importance_csv(report: ImportanceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["feature", "importance", "rank"])
    order = np.argsort(report.ranks)
    for i in order:
        writer.writerow([report.features[i], repr(float(report.values[i])),
                         int(report.ranks[i])])
    return buf.getvalue()
