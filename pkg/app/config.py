import os
from dotenv import load_dotenv

DEFAULT_SEED = 123


class Config:
    """Runtime settings; environment variables (or a .env file) override the defaults."""

    def __init__(self):
        # Load environment variables from .env file
        load_dotenv()

        # Seed used by every command unless --seed is given
        self.SEED = int(os.getenv('ENTDAG_SEED', DEFAULT_SEED))

        self.LOG_LEVEL = os.getenv('ENTDAG_LOG_LEVEL', 'INFO').upper()

        # Where commands write when no --out is given
        self.OUTPUT_DIR = os.getenv('ENTDAG_OUTPUT_DIR', 'outputs')

        # Worker processes for bench
        self.JOBS = int(os.getenv('ENTDAG_JOBS', 1))
