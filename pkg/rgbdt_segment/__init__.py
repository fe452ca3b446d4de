# --- rgbdt_segment/__init__.py ---
import logging

import click

# Use relative imports within the package
from .config import Config
from .commands import COMMANDS
from .decorators import ExitCodeGroup


def create_cli():
    """Factory function to create the rgbdt-segment command group."""

    @click.group(cls=ExitCodeGroup)
    @click.option("--log-level", default=Config.LOG_LEVEL, show_default=True,
                  type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
    def cli(log_level):
        """Moving-region segmentation for RGB-Depth-Thermal sequences."""
        # Configure logging
        logging.basicConfig(level=log_level.upper(),
                            format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        logging.getLogger(__name__).debug("rgbdt-segment starting up...")

    # Register the commands of the application
    for command in COMMANDS:
        cli.add_command(command)
    return cli
