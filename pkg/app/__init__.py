import logging
import sys

import click

from .config import Config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class CommandGroup(click.Group):
    """click group whose usage errors exit with 1 and whose runtime failures exit with 2."""

    def main(self, *args, standalone_mode=True, **kwargs):
        try:
            rv = super().main(*args, standalone_mode=False, **kwargs)
        except click.UsageError as e:
            if not standalone_mode:
                raise
            e.show()
            sys.exit(EXIT_USAGE)
        except click.ClickException as e:
            if not standalone_mode:
                raise
            e.show()
            sys.exit(e.exit_code)
        except click.Abort:
            if not standalone_mode:
                raise
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_USAGE)
        except Exception as e:
            if not standalone_mode:
                raise
            logging.getLogger(__name__).exception(f"Unhandled error: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
        if not standalone_mode:
            return rv
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def create_app():
    """Builds the command group with logging configured from the environment."""
    config = Config()
    logging.basicConfig(level=getattr(logging, config.LOG_LEVEL, logging.INFO),
                        format='%(asctime)s - %(levelname)s - %(message)s', datefmt='%Y-%m-%d %H:%M:%S')

    @click.group(cls=CommandGroup,
                 help="Continuous DAG structure learning with least-square and entropy-based scores.")
    @click.pass_context
    def app(ctx):
        ctx.ensure_object(dict)
        ctx.obj['config'] = config

    from . import commands
    commands.register(app)
    return app
