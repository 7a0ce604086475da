import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

# Single-threaded BLAS keeps matmul reductions identical across runs
os.environ.setdefault('OMP_NUM_THREADS', '1')
os.environ.setdefault('OPENBLAS_NUM_THREADS', '1')
os.environ.setdefault('MKL_NUM_THREADS', '1')


class Config:
    """Application configuration."""

    # Output
    basedir = os.path.abspath(os.path.dirname(__file__))
    OUTPUT_ROOT = os.getenv('CODSA_OUTPUT_ROOT', os.path.join(basedir, 'results'))

    # Execution
    WORKERS = int(os.getenv('CODSA_WORKERS', 1))
    LOG_LEVEL = os.getenv('CODSA_LOG_LEVEL', 'INFO').upper()
    PROGRESS = os.getenv('CODSA_PROGRESS', 'True') == 'True'

    # Numerical constants shared by the services
    PROB_CLIP = 1e-7
    DEFAULT_BATCH_SIZE = 128
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8
    SYNTHESIS_CHUNK = 256
    TAU_PROJECTIONS = 64

    LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

    @staticmethod
    def validate():
        """Warn about settings that look wrong without refusing to start."""
        logger = logging.getLogger(__name__)
        if Config.WORKERS < 1:
            logger.warning("CODSA_WORKERS=%s is below 1; using a single worker.", Config.WORKERS)
            Config.WORKERS = 1
        if Config.LOG_LEVEL not in logging._nameToLevel:
            logger.warning("Unknown CODSA_LOG_LEVEL '%s'; falling back to INFO.", Config.LOG_LEVEL)
            Config.LOG_LEVEL = 'INFO'

    @staticmethod
    def setup_logging(level=None):
        """Install one stream handler on the root logger.

        Args:
            level: Optional level name overriding CODSA_LOG_LEVEL
        """
        level_name = (level or Config.LOG_LEVEL).upper()
        root = logging.getLogger()
        if not any(getattr(h, '_codsa', False) for h in root.handlers):
            handler = logging.StreamHandler()
            handler.setFormatter(logging.Formatter(Config.LOG_FORMAT))
            handler._codsa = True
            root.addHandler(handler)
        root.setLevel(logging._nameToLevel.get(level_name, logging.INFO))
