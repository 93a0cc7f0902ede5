import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from .models import CheckFinding, MissionRun
from .session import get_session

logger = logging.getLogger(__name__)

BASE_DIR = Path(__file__).parent.parent
HISTORY_FALLBACK_FILE = BASE_DIR / "logs" / "mission_history.jsonl"


def _summary_row(report, log_path) -> dict:
    return {
        "timestamp": datetime.utcnow().isoformat(),
        "plan_name": report.name,
        "scenario": report.scenario,
        "variant": report.variant,
        "seed": report.seed,
        "complete": report.complete,
        "incomplete_reason": report.incomplete_reason,
        "anomaly_count": int(report.summary.get("anomaly_count", 0)),
        "log_path": str(log_path) if log_path else None,
    }


def record_mission(report, log_path=None, session=None, fallback_file: Optional[Path] = None) -> Optional[int]:
    """
    Store a mission report (one MissionRun, one CheckFinding per outcome).
    Falls back to appending a summary line to a JSON-lines file when the database is unusable.
    Returns the run id, or None when the fallback was used.
    """
    own_session = session is None
    session = session or get_session()
    try:
        run = MissionRun(plan_name=report.name, scenario=report.scenario, variant=report.variant,
                         seed=report.seed, digest=report.digest, complete=report.complete,
                         incomplete_reason=report.incomplete_reason,
                         anomaly_count=int(report.summary.get("anomaly_count", 0)),
                         summary=dict(report.summary), log_path=str(log_path) if log_path else None)
        for cp in report.checkpoints:
            for o in cp.outcomes:
                run.findings.append(CheckFinding(
                    checkpoint=o.checkpoint, label=cp.label or "", check=o.check, status=o.status,
                    anomalous=o.anomalous, reason=o.reason, attempts=o.attempts,
                    pose_x=cp.pose[0] if cp.pose else None, pose_y=cp.pose[1] if cp.pose else None,
                    values=o.values))
        session.add(run)
        session.commit()
        logger.info(f"Mission {report.name} stored as run {run.id} ({len(run.findings)} findings)")
        return run.id
    except Exception as e:
        session.rollback()
        logger.warning(f"DB record_mission failed, falling back to JSON lines: {e}")
    finally:
        if own_session:
            try:
                session.close()
            except Exception:
                pass

    path = Path(fallback_file or HISTORY_FALLBACK_FILE)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(_summary_row(report, log_path)) + "\n")
    return None


def mission_history(scenario: Optional[str] = None, limit: int = 10, session=None) -> List[dict]:
    """Latest runs first, as plain dicts."""
    own_session = session is None
    session = session or get_session()
    try:
        q = session.query(MissionRun)
        if scenario:
            q = q.filter(MissionRun.scenario == scenario)
        rows = q.order_by(MissionRun.started_at.desc(), MissionRun.id.desc()).limit(limit).all()
        return [{
            "id": r.id,
            "timestamp": r.started_at.isoformat() if r.started_at else None,
            "plan_name": r.plan_name,
            "scenario": r.scenario,
            "variant": r.variant,
            "seed": r.seed,
            "complete": r.complete,
            "anomaly_count": r.anomaly_count,
            "anomalies": [(f.checkpoint, f.check) for f in r.findings if f.anomalous],
        } for r in rows]
    finally:
        if own_session:
            session.close()
