import os
import logging
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from a .env file
load_dotenv()

logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# Optional environment variables with defaults
OPTIONAL_ENV_VARS = {
    "ARTIGEN_OUTPUT_DIR": "output",
    "ARTIGEN_SEED": "0",
    "ARTIGEN_JOBS": "1",
    "ARTIGEN_CONTACT_RADIUS": "0.01",
    "LOG_LEVEL": "INFO",
    "LOG_FILE": None,
}

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# Resolve path relative to base if not absolute
def resolve_path(path: Optional[str]) -> Optional[str]:
    if path and not os.path.isabs(path):
        return os.path.join(BASE_DIR, path)
    return path


def _env(name: str) -> Optional[str]:
    return os.getenv(name, OPTIONAL_ENV_VARS[name])


OUTPUT_DIR = resolve_path(_env("ARTIGEN_OUTPUT_DIR"))
DEFAULT_SEED = int(_env("ARTIGEN_SEED"))
DEFAULT_JOBS = max(1, int(_env("ARTIGEN_JOBS")))
CONTACT_RADIUS = float(_env("ARTIGEN_CONTACT_RADIUS"))
LOG_LEVEL = (_env("LOG_LEVEL") or "INFO").upper()
LOG_FILE = resolve_path(_env("LOG_FILE"))


def configure_logging(verbose: bool = False) -> logging.Logger:
    """Attach handlers to the package logger once; safe to call repeatedly."""
    package_logger = logging.getLogger("artigen")
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL, logging.INFO)
    package_logger.setLevel(level)

    if not getattr(package_logger, "_artigen_configured", False):
        formatter = logging.Formatter(LOG_FORMAT)
        stream = logging.StreamHandler()
        stream.setFormatter(formatter)
        package_logger.addHandler(stream)
        if LOG_FILE:
            handler = logging.FileHandler(LOG_FILE, mode="a")
            handler.setFormatter(formatter)
            package_logger.addHandler(handler)
        package_logger._artigen_configured = True

    for handler in package_logger.handlers:
        handler.setLevel(level)

    package_logger.debug(f"Configuration loaded: OUTPUT_DIR={OUTPUT_DIR}, SEED={DEFAULT_SEED}, JOBS={DEFAULT_JOBS}")
    if LOG_FILE:
        package_logger.debug(f"Logging to file {LOG_FILE}")
    return package_logger
