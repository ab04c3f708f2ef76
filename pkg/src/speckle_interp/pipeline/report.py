"""Tables, JSON documents, PGM panels and figures for a set of MetricsReports."""

from __future__ import annotations

import json
from pathlib import Path

from ..metrics import MetricsReport
from ..nn.checkpoint import write_atomic
from .formats import side_by_side, write_pgm

CELL = 31
LEARNED = ("internet",)
CLASSIC = ("nearest", "bilinear", "bicubic")


def _fmt(v, spec: str) -> str:
    return "-" if v is None else format(v, spec)


def _cell(r: MetricsReport) -> str:
    return (f"{_fmt(r.mean_pcc, '.3f'):>6} {_fmt(r.mean_mse, '.3f'):>7} "
            f"{_fmt(r.cm_after, '.3f'):>6} {_fmt(r.mean_recon_pcc, '.3f'):>5}/{_fmt(r.success_rate, '.2f'):>4}")


def format_table(reports: list[MetricsReport]) -> str:
    """Fixed-width table: one row per pitch rung, one column per method.

    Each cell reads ``PCC MSE C_m recon/success``; ``C_m in`` is the mutual
    correlation of the binned inputs at that rung.
    """
    if not reports:
        raise ValueError("need at least one report")
    methods: list[str] = []
    for r in reports:
        if r.method not in methods:
            methods.append(r.method)
    rungs = sorted({r.pitch_index for r in reports})
    by_key = {(r.pitch_index, r.method): r for r in reports}
    head = f"{'rung':<5} {'C_m in':>7} | " + " | ".join(f"{m:^{CELL}}" for m in methods)
    sub = f"{'':<5} {'':>7} | " + " | ".join(f"{'PCC':>6} {'MSE':>7} {'C_m':>6} {'rec/succ':>10}" for _ in methods)
    lines = [head, sub, "-" * len(head)]
    for i in rungs:
        row = [by_key.get((i, m)) for m in methods]
        cm_in = next((r.cm_before for r in row if r is not None and r.cm_before is not None), None)
        cells = [_cell(r) if r is not None else f"{'':{CELL}}" for r in row]
        lines.append(f"{'d' + str(i):<5} {_fmt(cm_in, '.3f'):>7} | " + " | ".join(c.ljust(CELL) for c in cells))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def cm_comparisons(reports: list[MetricsReport]) -> list[str]:
    """State, per interpolated cell, whether C_m went up (classic) or down (learned) as expected."""
    out = []
    for r in reports:
        if r.method not in CLASSIC + LEARNED or r.cm_before is None or r.cm_after is None:
            continue
        expect_up = r.method in CLASSIC
        ok = r.cm_after >= r.cm_before if expect_up else r.cm_after <= r.cm_before
        rel = ">=" if expect_up else "<="
        out.append(f"d{r.pitch_index} {r.method}: C_m {r.cm_after:.4f} {rel} {r.cm_before:.4f} "
                   f"{'as expected' if ok else 'NOT as expected'}")
    return out


def reports_to_json(reports: list[MetricsReport]) -> str:
    doc = {"reports": [r.to_dict() for r in reports], "cm_comparisons": cm_comparisons(reports)}
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[MetricsReport]:
    doc = json.loads(text)
    return [MetricsReport.from_dict(d) for d in doc["reports"]]


def write_panels(examples: dict, out_dir: Path) -> list[Path]:
    """One PGM per (rung, method): input | interpolated | target | reconstruction | digit."""
    paths = []
    for (rung, method), ex in sorted(examples.items()):
        tiles = [ex.input, ex.interpolated, ex.target]
        tiles += [t for t in (ex.reconstruction, ex.digit) if t is not None]
        paths.append(write_pgm(out_dir / f"panel_d{rung}_{method}.pgm", side_by_side(tiles)))
    return paths


def write_figures(reports: list[MetricsReport], out_dir: Path) -> list[Path]:
    """C_m, interpolation PCC and reconstruction PCC against the pitch rung, one line per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    methods = []
    for r in reports:
        if r.method not in methods:
            methods.append(r.method)
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.8))
    binned = sorted({(r.pitch_index, r.cm_before) for r in reports if r.cm_before is not None})
    if binned:
        axes[0].plot([b[0] for b in binned], [b[1] for b in binned], "k-", lw=2, label="binned input")
    for m in methods:
        rows = sorted((r for r in reports if r.method == m), key=lambda r: r.pitch_index)
        x = [r.pitch_index for r in rows]
        style = "o--" if m in CLASSIC else "s-"
        axes[0].plot(x, [r.cm_after for r in rows], style, label=m)
        if any(r.mean_pcc is not None for r in rows):
            axes[1].plot(x, [r.mean_pcc for r in rows], style, label=m)
        if any(r.mean_recon_pcc is not None for r in rows):
            axes[2].plot(x, [r.mean_recon_pcc for r in rows], style, label=m)
    for ax, title in zip(axes, ("mutual correlation C_m", "interpolation PCC vs d0", "reconstruction PCC")):
        ax.set_xlabel("pitch rung i (bin factor 2^i)")
        ax.set_title(title)
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / "summary.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return [path]


def write_report(reports: list[MetricsReport], out_dir, examples: dict | None = None,
                 figures: bool = True) -> dict[str, Path]:
    if not reports:
        raise ValueError("need at least one report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = format_table(reports)
    notes = cm_comparisons(reports)
    text = table + ("\n" + "\n".join(notes) + "\n" if notes else "")
    paths = {"table": out_dir / "report.txt", "json": out_dir / "report.json"}
    write_atomic(paths["table"], text.encode("utf-8"))
    write_atomic(paths["json"], reports_to_json(reports).encode("utf-8"))
    if examples:
        for p in write_panels(examples, out_dir):
            paths[p.stem] = p
    if figures:
        for p in write_figures(reports, out_dir):
            paths[p.stem] = p
    return paths
