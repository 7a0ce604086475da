"""Command-line subcommands; each module exposes one click command."""
import logging
import sys
from contextlib import contextmanager
from typing import Optional

import click

from config import Config
from models.errors import CodsaError

logger = logging.getLogger(__name__)

config_option = click.option('--config', 'config_path', required=True, type=click.Path(dir_okay=False),
                             help='Experiment configuration (JSON).')
out_option = click.option('--out', 'out_dir', default=None, type=click.Path(file_okay=False),
                          help='Output directory (default: $CODSA_OUTPUT_ROOT).')
workers_option = click.option('--workers', default=None, type=click.IntRange(min=1),
                              help='Parallel workers (default: $CODSA_WORKERS).')
seed_option = click.option('--seed', default=None, type=click.IntRange(min=0),
                           help='Run a single replicate seed instead of the configured list.')


def output_dir(out_dir: Optional[str]) -> str:
    return out_dir or Config.OUTPUT_ROOT


def worker_count(workers: Optional[int]) -> int:
    return workers or Config.WORKERS


@contextmanager
def reported_errors(config_path: str):
    """Turn domain errors into a one-line message naming the config, and exit non-zero."""
    try:
        yield
    except CodsaError as e:
        click.echo(f"Error ({config_path}): {e}", err=True)
        sys.exit(2)
    except (OSError, MemoryError) as e:
        click.echo(f"Error ({config_path}): {e}", err=True)
        sys.exit(1)
    except Exception:
        logger.exception("Unexpected error")
        click.echo(f"Unexpected error while processing {config_path}", err=True)
        sys.exit(1)
