import logging
import os
from logging.handlers import RotatingFileHandler


def configure_logging(app_name: str = 'curricula', log_level: str | None = None):
    level_name = (log_level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    level = getattr(logging, level_name, logging.INFO)

    logger = logging.getLogger()
    logger.setLevel(level)

    if logger.handlers:
        return logger

    formatter = logging.Formatter(fmt='%(levelname)s %(name)s: %(message)s')

    ch = logging.StreamHandler()
    ch.setLevel(level)
    ch.setFormatter(formatter)
    logger.addHandler(ch)

    log_dir = os.getenv('LOG_DIR', 'logs')
    try:
        os.makedirs(log_dir, exist_ok=True)
        fh = RotatingFileHandler(
            os.path.join(log_dir, f'{app_name}.log'),
            maxBytes=2_000_000, backupCount=5, encoding='utf-8'
        )
        fh.setLevel(level)
        fh.setFormatter(formatter)
        logger.addHandler(fh)
    except OSError:
        # read-only working directory: console logging only
        pass

    # Reduce noise from common third-party loggers
    for noisy in ('urllib3', 'werkzeug', 'matplotlib'):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    main = logging.getLogger('curricula.main')
    main.propagate = True
    main.setLevel(level)
    return logger
