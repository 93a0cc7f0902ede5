"""
Report output: text, CSV, JSON, JSON lines and PDF, plus optional plots.
"""
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import pandas as pd

from agents.report import SKIPPED, CheckOutcome, CheckpointReport, MissionReport

logger = logging.getLogger(__name__)

FORMATS = ('text', 'csv', 'json', 'jsonl', 'pdf')
CSV_COLUMNS = ('checkpoint', 'waypoint', 'label', 'check', 'status', 'anomalous', 'reason', 'attempts',
               't_start', 't_end', 'pose_x', 'pose_y', 'pose_theta', 'values')
SUMMARY_KEYS = ('checks_planned', 'checks_executed', 'findings', 'clear', 'skipped', 'anomaly_count',
                'waypoints_reached', 'waypoints_total', 'route_completion', 'distance_m', 'sim_time',
                'safety_stops', 'localization_flags')


def _compact(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(',', ':'))


def report_rows(report: MissionReport) -> List[dict]:
    rows = []
    for cp in report.checkpoints:
        pose = cp.pose or [None, None, None]
        for o in cp.outcomes:
            rows.append({'checkpoint': o.checkpoint, 'waypoint': cp.waypoint, 'label': cp.label, 'check': o.check,
                         'status': o.status, 'anomalous': o.anomalous, 'reason': o.reason, 'attempts': o.attempts,
                         't_start': cp.t_start, 't_end': cp.t_end, 'pose_x': pose[0], 'pose_y': pose[1],
                         'pose_theta': pose[2], 'values': _compact(o.values)})
    return rows


def report_frame(report: MissionReport) -> pd.DataFrame:
    """One row per (checkpoint, check), columns in ``CSV_COLUMNS`` order."""
    return pd.DataFrame(report_rows(report), columns=list(CSV_COLUMNS))


def read_report_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision='round_trip', keep_default_na=False,
                     na_values={c: [''] for c in ('t_start', 't_end', 'pose_x', 'pose_y', 'pose_theta')})
    if 'values' in df:
        df['values'] = [json.loads(v) if v else {} for v in df['values']]
    return df


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return f'{v:.3g}'
    if isinstance(v, list) and len(v) > 4:
        return f'[{len(v)} items]'
    return str(v)


def render_text(report: MissionReport) -> str:
    s = report.summary
    lines = [f'Inspection report: {report.name}',
             f'Scenario: {report.scenario}{" (" + report.variant + ")" if report.variant else ""}, seed {report.seed}',
             f'Status: {"complete" if report.complete else "INCOMPLETE - " + report.incomplete_reason}', '']
    if s:
        lines.append(f'Route: {s["waypoints_reached"]}/{s["waypoints_total"]} waypoints '
                     f'({s["route_completion"]:.0%}), {s["distance_m"]:.1f} m, {s["sim_time"]:.1f} s sim time')
        lines.append(f'Checks: {s["checks_executed"]}/{s["checks_planned"]} executed, {s["findings"]} findings, '
                     f'{s["anomaly_count"]} anomalies, {s["skipped"]} skipped')
        lines.append(f'Safety stops: {s["safety_stops"]}, localization flags: {s["localization_flags"]}')
    for cp in report.checkpoints:
        lines.append('')
        where = f'({cp.pose[0]:.2f}, {cp.pose[1]:.2f})' if cp.pose else '(not reached)'
        lines.append(f'Checkpoint {cp.index} [{cp.label or "-"}] waypoint {cp.waypoint} {where}')
        for o in cp.outcomes:
            mark = '!' if o.anomalous else ' '
            text = o.reason if o.status == SKIPPED else \
                ', '.join(f'{k}={_fmt_value(v)}' for k, v in sorted(o.values.items()))
            lines.append(f'  {mark} {o.check:<14} {o.status:<8} {text}')
    return '\n'.join(lines) + '\n'


def report_jsonl_lines(report: MissionReport) -> List[str]:
    head = report.to_dict()
    checkpoints = head.pop('checkpoints')
    lines = [json.dumps({'type': 'report', **head})]
    lines.extend(json.dumps({'type': 'checkpoint', **cp}) for cp in checkpoints)
    return lines


def read_report_jsonl(path) -> MissionReport:
    head, checkpoints = None, []
    for line in Path(path).read_text(encoding='utf-8').splitlines():
        if not line.strip():
            continue
        item = json.loads(line)
        kind = item.pop('type', None)
        if kind == 'report':
            head = item
        elif kind == 'checkpoint':
            checkpoints.append(item)
    if head is None:
        raise ValueError(f'{path}: no report line')
    return MissionReport.from_dict({**head, 'checkpoints': checkpoints})


def read_report_json(path) -> MissionReport:
    return MissionReport.from_dict(json.loads(Path(path).read_text(encoding='utf-8')))


def render_report(report: MissionReport, out_dir, formats: Iterable[str] = ('text', 'csv', 'jsonl'),
                  plots: bool = False, reference_grid=None, stem: Optional[str] = None,
                  png: bool = False) -> List[Path]:
    """Write the report in each requested format (and plots when asked); returns the files written."""
    formats = list(formats)
    unknown = [f for f in formats if f not in FORMATS]
    if unknown:
        raise ValueError(f'unknown report formats {unknown} (known: {", ".join(FORMATS)})')
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or report.name
    written = []
    for fmt in formats:
        if fmt == 'text':
            path = out_dir / f'{stem}.txt'
            path.write_text(render_text(report), encoding='utf-8')
        elif fmt == 'csv':
            path = out_dir / f'{stem}.csv'
            report_frame(report).to_csv(path, index=False)
        elif fmt == 'json':
            path = out_dir / f'{stem}.json'
            path.write_text(json.dumps(report.to_dict(), indent=1) + '\n', encoding='utf-8')
        elif fmt == 'jsonl':
            path = out_dir / f'{stem}.jsonl'
            path.write_text('\n'.join(report_jsonl_lines(report)) + '\n', encoding='utf-8')
        else:
            from .pdf_generator import report_pdf_bytes
            path = out_dir / f'{stem}.pdf'
            path.write_bytes(report_pdf_bytes(report, render_text(report)))
        written.append(path)
    if plots:
        from .plots import write_report_plots
        written.extend(write_report_plots(report, out_dir / f'{stem}_plots', reference_grid, png))
    logger.info(f'Report {report.name} written: {", ".join(p.name for p in written)}')
    return written


__all__ = ['FORMATS', 'CSV_COLUMNS', 'SUMMARY_KEYS', 'CheckOutcome', 'CheckpointReport', 'read_report_csv',
           'read_report_json', 'read_report_jsonl', 'render_report', 'render_text', 'report_frame']
