"""CSV, Excel and plot output for training logs, metric reports and timing tables."""
import csv
import logging
import math
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import openpyxl
from openpyxl.styles import Font

from .errors import DataError, FormatError
from .metrics import METRIC_FIELDS, REPORT_COLUMNS, MetricReport, TemporalSeries

logger = logging.getLogger(__name__)

TRAINING_LOG_COLUMNS = ('epoch', 'train_l1', 'val_l1', 'wall_seconds')
TIMING_COLUMNS = ('frame_index', 'wall_ms')
BENCH_COLUMNS = ('resolution', 'width', 'height', 'pixels', 'frames', 'mean_ms', 'std_ms')
TEMPORAL_COLUMNS = ('method', 'frame_index', 'mean_depth', 'abs_diff', 'signed_diff')


def _cell(value):
    if isinstance(value, float):
        if math.isnan(value):
            return ''
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return repr(value)
    return value


# ─── CSV ─────────────────────────────────────────────────────────────────────

def write_csv(path, columns: Sequence[str], rows: Iterable[Dict], seed: Optional[int] = None) -> Path:
    """Write rows as CSV, preceded by a ``# seed: N`` line when a seed is given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as fh:
        if seed is not None:
            fh.write(f"# seed: {seed}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c, '')) for c in columns])
    return path


def read_csv(path) -> List[Dict[str, str]]:
    """Read a CSV written by ``write_csv``; comment lines are skipped."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"report not found: {path}")
    with path.open(newline='') as fh:
        lines = [line for line in fh if not line.startswith('#')]
    if not lines:
        raise FormatError(f"{path}: no header row")
    return list(csv.DictReader(lines))


def read_seed(path) -> Optional[int]:
    with Path(path).open() as fh:
        first = fh.readline().strip()
    if first.startswith('# seed:'):
        return int(first.split(':', 1)[1])
    return None


def write_training_log(path, history, seed: int) -> Path:
    rows = [{'epoch': r.epoch, 'train_l1': r.train_l1, 'val_l1': r.val_l1,
             'wall_seconds': r.wall_seconds} for r in history]
    return write_csv(path, TRAINING_LOG_COLUMNS, rows, seed)


def write_metric_reports(path, reports: Sequence[MetricReport], seed: int) -> Path:
    rows = [row for report in reports for row in report.rows()]
    return write_csv(path, REPORT_COLUMNS, rows, seed)


def write_temporal_series(path, series: Dict[str, TemporalSeries], indices: Dict[str, Sequence[int]],
                          seed: int) -> Path:
    """One row per (method, frame): mean depth and the difference to the previous frame."""
    rows = []
    for method, s in series.items():
        for pos, index in enumerate(indices[method]):
            rows.append({
                'method': method,
                'frame_index': index,
                'mean_depth': s.mean_depth[pos],
                'abs_diff': s.abs_diff[pos - 1] if pos else math.nan,
                'signed_diff': s.signed_diff[pos - 1] if pos else math.nan,
            })
    return write_csv(path, TEMPORAL_COLUMNS, rows, seed)


# ─── Excel ───────────────────────────────────────────────────────────────────

def _sheet_title(name: str) -> str:
    # Excel limits sheet titles to 31 characters and forbids []:*?/\
    cleaned = ''.join('_' if ch in '[]:*?/\\' else ch for ch in name)
    return cleaned[:31] or 'sheet'


def write_xlsx_report(path, reports: Sequence[MetricReport], seed: int) -> Path:
    """Summary sheet (one row per method) plus one per-frame sheet per method."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = 'summary'
    ws.append(['seed', seed])
    header = ['method', 'dataset'] + list(METRIC_FIELDS)
    ws.append(header)
    for cell in ws[2]:
        cell.font = Font(bold=True)
    for report in reports:
        agg = report.aggregate()
        ws.append([report.method, report.dataset] + [_xlsx(agg[name]) for name in METRIC_FIELDS])

    for report in reports:
        sheet = wb.create_sheet(_sheet_title(report.method))
        sheet.append(list(REPORT_COLUMNS))
        for cell in sheet[1]:
            cell.font = Font(bold=True)
        for row in report.rows():
            sheet.append([_xlsx(row[c]) for c in REPORT_COLUMNS])
    wb.save(path)
    logger.info("Wrote Excel report %s", path)
    return path


def _xlsx(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else _cell(value)
    return value


def read_xlsx_summary(path) -> List[Dict[str, object]]:
    wb = openpyxl.load_workbook(path, data_only=True)
    ws = wb['summary']
    rows = list(ws.iter_rows(min_row=2, values_only=True))
    if not rows:
        raise FormatError(f"{path}: empty summary sheet")
    header = [str(v) for v in rows[0]]
    return [dict(zip(header, values)) for values in rows[1:] if any(v is not None for v in values)]


# ─── Plots ───────────────────────────────────────────────────────────────────

def plot_temporal(path, series: Dict[str, TemporalSeries], indices: Dict[str, Sequence[int]]) -> Path:
    """Mean-depth-difference curves per method."""
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(8, 4))
    for method, s in series.items():
        ax.plot(list(indices[method])[1:], s.signed_diff, label=method, linewidth=1)
    ax.set_xlabel('frame')
    ax.set_ylabel('mean depth difference (normalized)')
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training(path, history) -> Path:
    import matplotlib
    matplotlib.use('Agg')
    import matplotlib.pyplot as plt

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [r.epoch for r in history]
    ax.plot(epochs, [r.train_l1 for r in history], label='train')
    ax.plot(epochs, [r.val_l1 for r in history], label='validation')
    ax.set_xlabel('epoch')
    ax.set_ylabel('L1')
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
