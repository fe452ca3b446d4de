# --- rgbdt_segment/decorators.py ---

import logging
from functools import wraps

import click

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def exit_codes(f):
    """
    Decorator for CLI commands.
    Lets click's own usage errors through, and turns everything else raised by
    the command into a logged message and a process exit code:
    ValueError (validation) -> 1, OSError (I/O) -> 2, anything unexpected -> 2.
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (click.exceptions.Exit, click.exceptions.Abort, click.ClickException):
            raise
        except ValueError as e:
            logger.error(f"Validation error: {e}")
            click.echo(f"Error: {e}", err=True)
            raise click.exceptions.Exit(EXIT_VALIDATION)
        except OSError as e:
            logger.error(f"I/O error: {e}")
            click.echo(f"Error: {e}", err=True)
            raise click.exceptions.Exit(EXIT_IO)
        except Exception as e:
            logger.error(f"Unexpected error in {f.__name__}: {e}", exc_info=True)
            click.echo("Error: an internal error occurred", err=True)
            raise click.exceptions.Exit(EXIT_IO)

    return decorated_function


class ExitCodeGroup(click.Group):
    """
    Command group that reports click usage errors (bad or missing flag values)
    with the validation exit code instead of click's default of 2.
    """

    def make_context(self, info_name, args, parent=None, **extra):
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION  # Group-level flags and unknown commands
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as e:
            e.exit_code = EXIT_VALIDATION  # Subcommand flags are parsed here
            raise
