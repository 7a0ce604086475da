import click

from commands import config_option, out_option, output_dir, reported_errors, seed_option
from services.experiment_service import ExperimentService


@click.command('diagnose')
@config_option
@out_option
@seed_option
@click.option('--checkpoint', default=None, type=click.Path(dir_okay=False),
              help='Generator checkpoint (overrides diagnose.checkpoint).')
def diagnose_cmd(config_path, out_dir, seed, checkpoint):
    """Domain index, generation index and generation error of a stored generator."""
    with reported_errors(config_path):
        cfg, raw = ExperimentService.load_config(config_path)
        cfg = ExperimentService.with_seed(cfg, seed)
        if checkpoint:
            cfg.diagnose.checkpoint = checkpoint
        for path in ExperimentService.diagnose(cfg, raw, output_dir(out_dir)):
            click.echo(path)
