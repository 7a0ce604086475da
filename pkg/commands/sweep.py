import click

from commands import (config_option, out_option, output_dir, reported_errors, seed_option, worker_count,
                      workers_option)
from models.experiment import SWEEP_PARAMS
from services.experiment_service import ExperimentService


@click.command('sweep')
@config_option
@click.option('--param', required=True, type=click.Choice(SWEEP_PARAMS), help='Hyperparameter to sweep.')
@out_option
@workers_option
@seed_option
def sweep_cmd(config_path, param, out_dir, workers, seed):
    """Test metric per value of one hyperparameter, the other two tuned on validation."""
    with reported_errors(config_path):
        cfg, raw = ExperimentService.load_config(config_path)
        cfg = ExperimentService.with_seed(cfg, seed)
        for path in ExperimentService.sweep(cfg, raw, param, output_dir(out_dir), worker_count(workers)):
            click.echo(path)
