import io
import textwrap
from typing import Optional, Tuple

from reportlab.lib import colors
from reportlab.lib.pagesizes import A4
from reportlab.lib.units import mm
from reportlab.pdfgen import canvas

from agents.report import FINDING, SKIPPED, MissionReport

STATUS_COLOURS = {FINDING: colors.firebrick, SKIPPED: colors.grey}


class _Pages:
    """Top-down line writer that starts a new page when the margin is hit."""

    def __init__(self, c: canvas.Canvas, margin: float = 20 * mm, line_height: float = 5.5 * mm):
        self.c = c
        self.margin = margin
        self.line_height = line_height
        self.height = A4[1]
        self.y = self.height - margin

    def line(self, text: str, font: Tuple[str, int] = ('Helvetica', 10), colour=colors.black,
             indent: float = 0.0) -> None:
        if self.y < self.margin + 5 * mm:
            self.c.showPage()
            self.y = self.height - self.margin
        self.c.setFont(*font)
        self.c.setFillColor(colour)
        self.c.drawString(self.margin + indent, self.y, text)
        self.y -= self.line_height

    def skip(self, lines: float = 1.0) -> None:
        self.y -= self.line_height * lines


def report_pdf_bytes(report: MissionReport, text: Optional[str] = None) -> bytes:
    """Inspection report as a PDF: header, summary, then each checkpoint with coloured outcome lines."""
    buffer = io.BytesIO()
    c = canvas.Canvas(buffer, pagesize=A4)
    c.setTitle(f'Inspection report {report.name}')
    pages = _Pages(c)

    pages.line(f'Inspection report: {report.name}', ('Helvetica-Bold', 14))
    scenario = report.scenario + (f' ({report.variant})' if report.variant else '')
    pages.line(f'Scenario {scenario}, seed {report.seed}, digest {report.digest[:12]}')
    if report.complete:
        pages.line('Round complete', ('Helvetica-Bold', 10))
    else:
        pages.line(f'Round INCOMPLETE: {report.incomplete_reason}', ('Helvetica-Bold', 10), colors.firebrick)
    pages.skip(0.5)
    for key, value in report.summary.items():
        shown = f'{value:.3g}' if isinstance(value, float) else str(value)
        pages.line(f'{key.replace("_", " ")}: {shown}', indent=5 * mm)

    for cp in report.checkpoints:
        pages.skip(0.7)
        where = f'at ({cp.pose[0]:.2f}, {cp.pose[1]:.2f})' if cp.pose else 'not reached'
        pages.line(f'Checkpoint {cp.index} [{cp.label or "-"}] waypoint {cp.waypoint}, {where}',
                   ('Helvetica-Bold', 11))
        for o in cp.outcomes:
            colour = STATUS_COLOURS.get(o.status, colors.darkgreen)
            detail = o.reason if o.status == SKIPPED else ', '.join(
                f'{k}={v:.3g}' if isinstance(v, float) else f'{k}={v}'
                for k, v in sorted(o.values.items()) if not isinstance(v, (list, dict)))
            wrapped = textwrap.wrap(f'{o.check}: {o.status}{"  " + detail if detail else ""}', width=90) or ['']
            pages.line(wrapped[0], colour=colour, indent=5 * mm)
            for chunk in wrapped[1:]:
                pages.line(chunk, colour=colour, indent=10 * mm)

    if text:
        c.showPage()
        pages.y = pages.height - pages.margin
        pages.line('Text rendering', ('Helvetica-Bold', 12))
        for paragraph in text.splitlines():
            for chunk in textwrap.wrap(paragraph, width=95) or ['']:
                pages.line(chunk, ('Courier', 8))
    c.save()
    return buffer.getvalue()
