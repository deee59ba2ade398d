import logging
import sys

from app.presentation import cli
from config import Config


def configure_logging():
    # stdout carries the JSON report, so console logs go to stderr
    handlers = [logging.StreamHandler(sys.stderr)]
    if Config.LOG_FILE:
        handlers.append(logging.FileHandler(Config.LOG_FILE))
    logging.basicConfig(
        level=Config.LOG_LEVEL,
        format=
        '%(asctime)s - %(name)s - %(levelname)s - [%(filename)s:%(lineno)d] - %(message)s',
        handlers=handlers)


if __name__ == '__main__':
    configure_logging()
    sys.exit(cli.main())
