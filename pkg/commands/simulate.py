import click

from commands import config_option, out_option, output_dir, reported_errors, seed_option
from services.experiment_service import ExperimentService


@click.command('simulate')
@config_option
@out_option
@seed_option
def simulate_cmd(config_path, out_dir, seed):
    """Draw train/val/test CSVs from the configured simulation."""
    with reported_errors(config_path):
        cfg, raw = ExperimentService.load_config(config_path)
        cfg = ExperimentService.with_seed(cfg, seed)
        for path in ExperimentService.simulate(cfg, raw, output_dir(out_dir)):
            click.echo(path)
