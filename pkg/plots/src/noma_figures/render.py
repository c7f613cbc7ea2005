"""Render the three experiment figures from simulator result CSVs.

The renderer consumes only the public CSV schema of the simulator:

    experiment,model,scheme,combiner,M,N,K,L,sweep_var,sweep_value,
    sum_se_mean,sum_se_stderr,trials,seed

Series are grouped by the distinct (scheme, combiner, N) triples present in
the data; x is sweep_value, y is sum_se_mean, with error bars from
sum_se_stderr whenever trials > 1. Rendering is read-only and, for SVG
output, byte-deterministic for identical input.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

REQUIRED_COLUMNS = [
    "experiment",
    "model",
    "scheme",
    "combiner",
    "M",
    "N",
    "K",
    "L",
    "sweep_var",
    "sweep_value",
    "sum_se_mean",
    "sum_se_stderr",
    "trials",
    "seed",
]

FIGURE_EXPERIMENT = {
    "fig1": "angle-sweep",
    "fig2": "variance-sweep",
    "fig3": "cluster-sweep",
}


class SchemaError(ValueError):
    """Input CSV does not conform to the simulator's result schema."""


@dataclass(frozen=True)
class FigureSpec:
    figure: str  # "fig1" | "fig2" | "fig3"
    inputs: tuple[str, ...]
    output: str

    def __post_init__(self):
        if self.figure not in FIGURE_EXPERIMENT:
            raise ValueError(f"unknown figure {self.figure!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


@dataclass
class ResultRow:
    model: str
    scheme: str
    combiner: str
    N: int
    sweep_value: float
    sum_se_mean: float
    sum_se_stderr: float
    trials: int

    @property
    def series_key(self) -> tuple[str, str, int]:
        return (self.scheme, self.combiner, self.N)


def read_rows(path: str, experiment: str) -> list[ResultRow]:
    """Read rows of one experiment, rejecting schema mismatches by name."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in REQUIRED_COLUMNS if c not in header]
            if missing:
                raise SchemaError(
                    f"{path}: missing required columns {missing}; found {header}"
                )
            raw = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    rows = []
    for n, rec in enumerate(raw, start=2):
        if rec["experiment"] != experiment:
            continue
        try:
            rows.append(
                ResultRow(
                    model=rec["model"],
                    scheme=rec["scheme"],
                    combiner=rec["combiner"],
                    N=int(rec["N"]),
                    sweep_value=float(rec["sweep_value"]),
                    sum_se_mean=float(rec["sum_se_mean"]),
                    sum_se_stderr=float(rec["sum_se_stderr"]),
                    trials=int(rec["trials"]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"{path}:{n}: malformed row ({exc})") from exc
    return rows


def group_series(rows: list[ResultRow]) -> dict[tuple[str, str, int], list[ResultRow]]:
    """Group rows by (scheme, combiner, N), each series sorted by x."""
    series: dict[tuple[str, str, int], list[ResultRow]] = {}
    for row in rows:
        series.setdefault(row.series_key, []).append(row)
    for key in series:
        series[key].sort(key=lambda r: r.sweep_value)
    return dict(sorted(series.items()))


def _series_label(key: tuple[str, str, int]) -> str:
    scheme, combiner, n = key
    comb = {"mmse": "M-MMSE", "mr": "MR", "none": ""}.get(combiner, combiner)
    if scheme == "mmimo":
        return f"mMIMO ({comb})"
    if scheme == "noma":
        return f"NOMA N={n} ({comb})"
    return scheme


def _deterministic_rcparams():
    plt.rcdefaults()
    matplotlib.rcParams["svg.hashsalt"] = "noma-figures"
    matplotlib.rcParams["svg.fonttype"] = "none"


def _plot_panel(ax, rows: list[ResultRow], ylabel: str):
    for key, pts in group_series(rows).items():
        x = [r.sweep_value for r in pts]
        y = [r.sum_se_mean for r in pts]
        err = [r.sum_se_stderr for r in pts]
        with_bars = any(e > 0 and r.trials > 1 for e, r in zip(err, pts))
        if with_bars:
            ax.errorbar(x, y, yerr=err, label=_series_label(key), capsize=2)
        else:
            ax.plot(x, y, label=_series_label(key))
        if len(x) == 1:
            ax.plot(x, y, marker="o", color=ax.get_lines()[-1].get_color())
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)


def _model_panels(rows: list[ResultRow]) -> list[tuple[str, list[ResultRow]]]:
    models = sorted({r.model for r in rows})
    return [(m, [r for r in rows if r.model == m]) for m in models]


def render(spec: FigureSpec) -> str:
    """Render one figure to the output path; returns the path written."""
    experiment = FIGURE_EXPERIMENT[spec.figure]
    rows: list[ResultRow] = []
    for path in spec.inputs:
        rows.extend(read_rows(path, experiment))
    if not rows:
        raise SchemaError(
            f"no rows with experiment={experiment!r} in {list(spec.inputs)}"
        )
    _deterministic_rcparams()
    if spec.figure == "fig2":
        fig, ax = plt.subplots(figsize=(6, 4))
        for model, mrows in _model_panels(rows):
            pts = sorted(mrows, key=lambda r: r.sweep_value)
            x = [r.sweep_value for r in pts]
            y = [r.sum_se_mean for r in pts]
            ax.plot(x, y, label=model)
        ax.set_xlabel("interfering UE angle [deg]")
        ax.set_ylabel("channel orthogonality variance")
        ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
    else:
        panels = _model_panels(rows)
        fig, axes = plt.subplots(
            1, len(panels), figsize=(6 * len(panels), 4), squeeze=False
        )
        xlabel = (
            "interfering UE angle [deg]" if spec.figure == "fig1" else "UEs per cell K"
        )
        for ax, (model, mrows) in zip(axes[0], panels):
            _plot_panel(ax, mrows, "average sum SE [bit/s/Hz/cell]")
            ax.set_xlabel(xlabel)
            ax.set_title(f"{model} model")
    fig.tight_layout()
    fig.savefig(spec.output, metadata=_metadata_for(spec.output))
    plt.close(fig)
    return spec.output


def _metadata_for(path: str) -> dict:
    # strip volatile timestamps so identical input yields identical bytes
    if path.endswith(".svg"):
        return {"Date": None}
    if path.endswith(".png"):
        return {"Software": None}
    return {}
