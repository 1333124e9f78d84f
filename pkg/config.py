import os

from dotenv import load_dotenv

from modules import __version__

load_dotenv()


class Config:
    # Verbosity: error, info or debug
    LOG_LEVEL = os.environ.get('RAGD_LOG', 'info')

    DEFAULT_SEED = int(os.environ.get('RAGD_SEED', 0))
    OUTPUT_DIR = os.environ.get('RAGD_OUT', 'traces')

    # Curvature lower bound for the affine-invariant SPD metric
    SPD_KAPPA = float(os.environ.get('RAGD_SPD_KAPPA', 0.5))

    # gamma * L used by full-mode ragd when the config gives no gamma
    RAGD_GAMMA_FACTOR = float(os.environ.get('RAGD_GAMMA_FACTOR', 1.05))

    ORACLE_TOL = float(os.environ.get('RAGD_ORACLE_TOL', 1e-10))
    ORACLE_MAX_ITERS = int(os.environ.get('RAGD_ORACLE_MAX_ITERS', 1_000_000))

    CONTAINMENT_RETRIES = int(os.environ.get('RAGD_CONTAINMENT_RETRIES', 3))
    SPHERE_MU_FLOOR = float(os.environ.get('RAGD_SPHERE_MU_FLOOR', 1e-3))

    SWEEP_WORKERS = int(os.environ.get('RAGD_SWEEP_WORKERS', 1))

    VERSION = __version__
