import sys

from loguru import logger

from src.config import settings

LOG_FORMAT = "{time:YYYY-MM-DD HH:mm:ss} | {level:<8} | {message}"


def setup_logging(level: str | None = None, log_file: str | None = None):
    level = (level or settings.LOG_LEVEL).upper()
    logger.remove()
    logger.add(
        log_file or settings.LOG_FILE,
        rotation="10 MB",
        retention="10 days",
        enqueue=True,
        backtrace=True,
        diagnose=False,
        level=level,
        format=LOG_FORMAT,
    )
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    return logger
