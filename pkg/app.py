import logging
import traceback

import click

from config import Config

LOG_LEVELS = {'error': logging.ERROR, 'info': logging.INFO, 'debug': logging.DEBUG}


def configure_logging(level):
    name = str(level).lower()
    logging.basicConfig(
        level=LOG_LEVELS.get(name, logging.INFO),
        format='%(asctime)s %(levelname)s %(name)s: %(message)s',
    )
    if name not in LOG_LEVELS:
        logging.getLogger(__name__).warning('unknown log level %r, using info', level)


@click.group()
@click.version_option(Config.VERSION, prog_name='ragd')
@click.option('--log-level', type=click.Choice(list(LOG_LEVELS)), default=None,
              help='overrides RAGD_LOG')
def cli(log_level):
    """Accelerated Riemannian gradient experiments."""
    configure_logging(log_level or Config.LOG_LEVEL)


# Import and register commands
try:
    from modules.harness import COMMANDS

    for command in COMMANDS:
        cli.add_command(command)
except Exception as e:
    print(f"❌ Error registering commands: {e}")
    traceback.print_exc()


if __name__ == '__main__':
    cli()
