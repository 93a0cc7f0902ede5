import json
import logging
from pathlib import Path
import sys
from dotenv import load_dotenv

# Ensure project root and src/ are on sys.path for 'db' and report imports
ROOT = Path(__file__).parent.parent
for p in (ROOT, ROOT / 'src'):
    if str(p) not in sys.path:
        sys.path.insert(0, str(p))

# Load environment variables (e.g., DATABASE_URL) from .env if present
load_dotenv()

from db.session import engine
from db.models import Base
from db.history import HISTORY_FALLBACK_FILE, record_mission
from utils.report_render import read_report_json

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger('db_setup')

REPORTS = ROOT / 'reports'


def init_db():
    Base.metadata.create_all(bind=engine)
    logger.info(f'Tables ready at {engine.url}')


def import_reports(reports_dir: Path = REPORTS) -> int:
    """Load previously rendered JSON reports into the history tables."""
    imported = 0
    for path in sorted(reports_dir.glob('*.json')):
        try:
            report = read_report_json(path)
        except Exception as e:
            logger.warning(f'Skipping {path.name}: {e}')
            continue
        if record_mission(report) is not None:
            imported += 1
    if HISTORY_FALLBACK_FILE.exists():
        lines = [json.loads(l) for l in HISTORY_FALLBACK_FILE.read_text(encoding='utf-8').splitlines() if l.strip()]
        logger.info(f'{len(lines)} runs remain in the fallback file {HISTORY_FALLBACK_FILE}')
    logger.info(f'DB import completed: {imported} reports')
    return imported


if __name__ == '__main__':
    init_db()
    import_reports()
