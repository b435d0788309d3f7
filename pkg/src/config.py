# src/config.py - Runtime settings management

import logging
import os
import sys
from typing import Any, Dict, Optional

from dotenv import load_dotenv


class DPIADMMConfig:
    """Runtime settings for the DP-IADMM toolkit (environment and .env driven)."""

    def __init__(self, env_file: Optional[str] = None):
        """Initialize settings from environment variables and .env file."""
        if env_file:
            load_dotenv(env_file)
        elif os.path.exists('.env'):
            load_dotenv('.env')

        self._load_config()

    def _load_config(self):
        """Load settings from environment variables."""
        # Paths
        self.output_dir = os.getenv('DPIADMM_OUTPUT_DIR', 'runs')
        self.data_dir = os.getenv('DPIADMM_DATA_DIR', 'data')

        # Execution
        self.threads = _parse_int(os.getenv('DPIADMM_THREADS', '1'))

        # Server settings
        self.server_name = os.getenv('MCP_SERVER_NAME', 'dpiadmm-fl')
        self.server_version = os.getenv('MCP_SERVER_VERSION', '1.0.0')

        # Debug settings
        self.debug = os.getenv('DPIADMM_DEBUG', 'false').lower() == 'true'
        self.log_level = os.getenv('DPIADMM_LOG_LEVEL', 'INFO').upper()

    def reload(self):
        """Re-read the environment (tests change variables between cases)."""
        self._load_config()

    def get_paths(self) -> Dict[str, Any]:
        """Get the configured input/output directories."""
        return {
            'output_dir': self.output_dir,
            'data_dir': self.data_dir,
        }

    def validate_config(self) -> list[str]:
        """Validate settings and return list of errors."""
        errors = []

        if self.threads is None:
            errors.append("DPIADMM_THREADS must be an integer")
        elif self.threads < 1:
            errors.append("DPIADMM_THREADS must be at least 1")

        if self.log_level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"DPIADMM_LOG_LEVEL '{self.log_level}' is not a logging level")

        if not self.output_dir:
            errors.append("DPIADMM_OUTPUT_DIR must not be empty")

        return errors

    def setup_logging(self):
        """Route package logging to stderr at the configured level.

        stdout is reserved for the MCP stdio transport.
        """
        level = getattr(logging, self.log_level, logging.INFO)
        root = logging.getLogger()
        if not any(getattr(h, '_dpiadmm', False) for h in root.handlers):
            handler = logging.StreamHandler(sys.stderr)
            handler.setFormatter(logging.Formatter('%(asctime)s %(levelname)s %(name)s: %(message)s'))
            handler._dpiadmm = True
            root.addHandler(handler)
        root.setLevel(level)

    def __str__(self) -> str:
        """String representation of settings."""
        return (f"DPIADMMConfig(output_dir={self.output_dir}, data_dir={self.data_dir}, "
                f"threads={self.threads}, log_level={self.log_level})")


def _parse_int(value: str) -> Optional[int]:
    try:
        return int(value)
    except (TypeError, ValueError):
        return None


# Global config instance
config = DPIADMMConfig()
