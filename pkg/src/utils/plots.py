"""
Plotly figures for report outcomes, written as standalone HTML files.
"""
import logging
from pathlib import Path
from typing import List, Optional

import numpy as np
import plotly.graph_objects as go

from agents.report import SKIPPED, CheckOutcome, MissionReport
from simworld.types import OccupancyGrid

logger = logging.getLogger(__name__)


def doa_polar(outcome: CheckOutcome) -> go.Figure:
    grid = outcome.details.get('grid_deg', [])
    powers = np.asarray(outcome.details.get('powers', []), dtype=float)
    if powers.size and powers.max() > 0:
        powers = powers / powers.max()
    fig = go.Figure(go.Scatterpolar(r=powers.tolist(), theta=list(grid), mode='lines', name='steered power'))
    for az in outcome.values.get('azimuths_deg', []):
        fig.add_trace(go.Scatterpolar(r=[0, 1], theta=[az, az], mode='lines', line=dict(dash='dash'),
                                      name=f'source {az:.1f} deg'))
    fig.update_layout(title=f'Sound directions at checkpoint {outcome.checkpoint} (robot frame)',
                      polar=dict(angularaxis=dict(direction='counterclockwise', rotation=0)),
                      margin=dict(l=20, r=20, b=20, t=40))
    return fig


def cl_heatmap(outcome: CheckOutcome) -> go.Figure:
    cl = np.asarray(outcome.details.get('cl_mean', [[0.0]]), dtype=float)
    rate = outcome.values.get('rate_ml_min', 0.0)
    fig = go.Figure(go.Heatmap(z=cl, colorscale='Turbo', colorbar=dict(title='CL')))
    fig.update_layout(title=f'Gas concentration-length, checkpoint {outcome.checkpoint} '
                            f'({rate:.1f} mL/min estimated)',
                      yaxis=dict(autorange='reversed', scaleanchor='x'),
                      margin=dict(l=20, r=20, b=20, t=40))
    return fig


def map_diff_overlay(outcome: CheckOutcome, reference: Optional[OccupancyGrid] = None) -> go.Figure:
    fig = go.Figure()
    if reference is not None:
        x0, y0, x1, y1 = reference.extent()
        fig.add_trace(go.Heatmap(z=reference.probability(), x0=x0 + reference.resolution / 2, dx=reference.resolution,
                                 y0=y0 + reference.resolution / 2, dy=reference.resolution,
                                 colorscale='Greys', showscale=False, name='reference'))
    for region in outcome.details.get('regions', []):
        bx0, by0, bx1, by1 = region['bbox_xy']
        colour = 'firebrick' if region['polarity'] == 'appeared' else 'royalblue'
        fig.add_shape(type='rect', x0=bx0, y0=by0, x1=bx1, y1=by1, line=dict(color=colour, width=2))
        cx, cy = region['centroid_xy']
        fig.add_trace(go.Scatter(x=[cx], y=[cy], mode='markers+text', text=[region['polarity']],
                                 textposition='top center', marker=dict(color=colour), showlegend=False))
    fig.update_layout(title=f'Map changes at checkpoint {outcome.checkpoint}',
                      yaxis=dict(scaleanchor='x'), margin=dict(l=20, r=20, b=20, t=40))
    return fig


def write_report_plots(report: MissionReport, out_dir, reference: Optional[OccupancyGrid] = None,
                       png: bool = False) -> List[Path]:
    """One HTML figure per executed doa, gas_leak and map_diff outcome; PNG copies need kaleido."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    builders = {'doa': doa_polar, 'gas_leak': cl_heatmap,
                'map_diff': lambda o: map_diff_overlay(o, reference)}
    written = []
    for o in report.outcomes():
        if o.status == SKIPPED or o.check not in builders or not o.details:
            continue
        fig = builders[o.check](o)
        path = out_dir / f'cp{o.checkpoint}_{o.check}.html'
        fig.write_html(str(path), include_plotlyjs='cdn')
        written.append(path)
        if png:
            try:
                fig.write_image(str(path.with_suffix('.png')))
                written.append(path.with_suffix('.png'))
            except (ValueError, ImportError) as e:
                logger.warning(f'PNG export unavailable ({e}); keeping HTML only')
                png = False
    logger.info(f'{len(written)} plots written to {out_dir}')
    return written
