import sys
import logging
from pathlib import Path

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / 'src'))

from dotenv import load_dotenv
load_dotenv()

from config import load_config
from analytics.training import TRAINERS, train_model

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('train_models')


def main(kinds=None):
    """Train every model the analytics server loads into runner.models_dir."""
    cfg = load_config()
    out_dir = ROOT / cfg.get('runner.models_dir', 'models')
    for kind in kinds or TRAINERS:
        logger.info(f'Training {kind}...')
        train_model(kind, cfg, out_dir)
    logger.info(f'Models ready in {out_dir}')
    return 0


if __name__ == '__main__':
    sys.exit(main(sys.argv[1:] or None))
