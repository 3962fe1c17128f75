"""Static regret figures (SVG) rendered from trace files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .harness.trace import RegretTrace  # noqa: E402

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "lines.linewidth": 1.5,
    "svg.hashsalt": "gamband",
    "svg.fonttype": "path",
}

COLORS = {"linucb": "#1f77b4", "linucbw": "#17becf", "pe": "#d62728", "pe-unified": "#ff7f0e"}


def regret_bands(traces):
    """Mean and standard error of cumulative regret over traces, truncated to the shortest."""
    n = min(len(tr) for tr in traces)
    R = np.stack([tr.cum_regret[:n] for tr in traces])
    mean = R.mean(axis=0)
    se = R.std(axis=0, ddof=1) / math.sqrt(len(traces)) if len(traces) > 1 else np.zeros(n)
    return np.arange(1, n + 1), mean, se


def _group(traces):
    groups = {}
    for tr in traces:
        groups.setdefault(tr.metadata.get("algorithm", "run"), []).append(tr)
    return groups


def _data_comment(groups) -> str:
    lines = ["gamband regret data: algorithm, n_seeds, T, mean_R, se_R"]
    for algo, trs in groups.items():
        t, mean, se = regret_bands(trs)
        marks = sorted({len(t)} | {2**j for j in range(int(math.log2(len(t))) + 1)})
        for T in marks:
            lines.append(f"{algo}, {len(trs)}, {T}, {mean[T - 1]:.10g}, {se[T - 1]:.10g}")
    return "<!--\n" + "\n".join(lines).replace("--", "- -") + "\n-->\n"


def plot_regret(traces, out, title=None) -> Path:
    """Cumulative regret vs. t, mean +/- one standard error per algorithm.

    The SVG carries the plotted checkpoints as an XML comment and no
    timestamp, so identical traces give an identical file.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to plot")
    groups = _group(traces)
    out = Path(out)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.8))
        for algo, trs in groups.items():
            t, mean, se = regret_bands(trs)
            color = COLORS.get(algo)
            ax.plot(t, mean, color=color, label=f"{algo} (n={len(trs)})")
            ax.fill_between(t, mean - se, mean + se, color=color, alpha=0.25, linewidth=0)
        ax.set_xlabel("t")
        ax.set_ylabel("cumulative regret")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(out, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    text = out.read_text()
    head, sep, body = text.partition("?>\n")
    if sep:
        text = head + sep + _data_comment(groups) + body
    else:
        text = _data_comment(groups) + text
    out.write_text(text)
    return out


def load_traces(paths):
    files = []
    for p in paths:
        p = Path(p)
        files.extend(sorted(p.glob("*.csv")) if p.is_dir() else [p])
    return [RegretTrace.load(f) for f in files]
