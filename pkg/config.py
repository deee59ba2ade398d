import os
from dotenv import load_dotenv

# Carregar variáveis do .env
load_dotenv(override=True)


class Config:
    # Logging
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()
    LOG_FILE = os.environ.get('LOG_FILE', 'moral_lens.log')

    # Backends (applied to every role unless the pipeline config file says otherwise)
    BACKEND = os.environ.get('MORAL_LENS_BACKEND', 'stub')
    ENDPOINT = os.environ.get('MORAL_LENS_ENDPOINT', '')
    EMBEDDING_DIM = int(os.environ.get('MORAL_LENS_EMBEDDING_DIM', 8))
    MAX_IN_FLIGHT = int(os.environ.get('MORAL_LENS_MAX_IN_FLIGHT', 4))
    HTTP_TIMEOUT = float(os.environ.get('MORAL_LENS_HTTP_TIMEOUT', 60))

    # Pipeline
    SEED = int(os.environ.get('MORAL_LENS_SEED', 0))
    OUTPUT_DIR = os.environ.get('MORAL_LENS_OUTPUT_DIR', 'out')
    # empty means <output_dir>/head.bin
    HEAD_PATH = os.environ.get('MORAL_LENS_HEAD_PATH', '')
    WORKERS = int(os.environ.get('MORAL_LENS_WORKERS', 1))

    # Optional real-backend tests
    INTEGRATION_ENDPOINT = os.environ.get('MORAL_LENS_INTEGRATION_ENDPOINT', '')
