import json

import click

from commands import (config_option, out_option, output_dir, reported_errors, seed_option, worker_count,
                      workers_option)
from services.experiment_service import ExperimentService


@click.command('run')
@config_option
@out_option
@workers_option
@seed_option
@click.option('--dry-run', is_flag=True, help='Validate the configuration and print the job count only.')
@click.option('--no-checkpoints', is_flag=True, help='Do not store generators of the selected lambdas.')
def run_cmd(config_path, out_dir, workers, seed, dry_run, no_checkpoints):
    """Tune the configured method and write results."""
    with reported_errors(config_path):
        cfg, raw = ExperimentService.load_config(config_path)
        cfg = ExperimentService.with_seed(cfg, seed)
        if dry_run:
            click.echo(json.dumps(ExperimentService.dry_run(cfg), indent=2, sort_keys=True))
            return
        outputs = ExperimentService.run(cfg, raw, output_dir(out_dir), worker_count(workers),
                                        save_generators=not no_checkpoints)
        for path in outputs:
            click.echo(path)
