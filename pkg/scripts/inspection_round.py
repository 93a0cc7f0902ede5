import os
import sys
import logging
from pathlib import Path
from datetime import datetime

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / 'src'))
# Optional DB
try:
    sys.path.insert(0, str(ROOT))
    from db.history import record_mission
    DB_AVAILABLE = True
except Exception:
    DB_AVAILABLE = False

from dotenv import load_dotenv
load_dotenv()

from config import ConfigError, load_config
from agents.mission_plan import load_plan
from agents.mission_runner import default_log_path, run_mission, runner_params
from agents.robot_agent import world_params
from simworld.scenario import load_scenario
from utils.report_render import render_report

log_dir = ROOT / 'logs'
log_dir.mkdir(exist_ok=True)

log_file = log_dir / f"inspection_round_{datetime.now().strftime('%Y%m%d')}.log"

logging.basicConfig(
    level=os.environ.get('PLANTSIM_LOG_LEVEL', 'INFO'),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(log_file),
        logging.StreamHandler()
    ]
)
logger = logging.getLogger('inspection_round')

SCENARIO = Path(os.environ.get('PLANTSIM_SCENARIO', ROOT / 'scenarios' / 'wastewater.yaml'))
PLAN = Path(os.environ.get('PLANTSIM_PLAN', ROOT / 'scenarios' / 'wastewater_round.yaml'))


def missing_models(models_dir: Path):
    return [k for k in ('autoencoder', 'flow', 'signature') if not (models_dir / f'{k}.psm').exists()]


def main():
    """One unattended inspection round (run it from cron or a systemd timer)."""
    logger.info("=" * 80)
    logger.info(f"INSPECTION ROUND STARTED - {datetime.now()}")
    logger.info("=" * 80)

    cfg = load_config()
    params = runner_params(cfg)
    models_dir = ROOT / params.models_dir
    missing = missing_models(models_dir)
    if missing:
        logger.error(f"Models missing in {models_dir}: {', '.join(missing)}. Run scripts/train_models.py first.")
        return 3

    variant = os.environ.get('PLANTSIM_VARIANT') or None
    scenario = load_scenario(SCENARIO, variant, None, world_params(cfg))
    plan = load_plan(PLAN)
    log_path = default_log_path(params, scenario, ROOT)
    log_path.parent.mkdir(parents=True, exist_ok=True)

    report = run_mission(scenario, plan, cfg, models_dir=models_dir, log_path=log_path)
    stem = f"{plan.name}_{datetime.now().strftime('%Y%m%d_%H%M%S')}"
    written = render_report(report, ROOT / cfg.get('report.out_dir', 'reports'),
                            ['text', 'csv', 'json', 'pdf'], stem=stem)
    logger.info(f"Report written: {', '.join(p.name for p in written)}")

    if DB_AVAILABLE:
        try:
            run_id = record_mission(report, log_path)
            logger.info(f"Stored as mission run {run_id}")
        except Exception as e:
            logger.warning(f"Failed to store the round in the mission history: {e}")

    for o in report.anomalies():
        logger.warning(f"ANOMALY at checkpoint {o.checkpoint}: {o.check} {o.values}")

    logger.info("=" * 80)
    logger.info(f"INSPECTION ROUND COMPLETED - {datetime.now()} "
                f"({'complete' if report.complete else 'INCOMPLETE: ' + report.incomplete_reason})")
    logger.info("=" * 80)
    return 0 if report.complete else 2


if __name__ == '__main__':
    try:
        sys.exit(main())
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(3)
    except KeyboardInterrupt:
        logger.info("Inspection round interrupted by user")
        sys.exit(2)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        sys.exit(3)
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        sys.exit(1)
