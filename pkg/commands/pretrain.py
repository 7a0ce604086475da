import click

from commands import (config_option, out_option, output_dir, reported_errors, seed_option, worker_count,
                      workers_option)
from services.experiment_service import ExperimentService


@click.command('pretrain')
@config_option
@out_option
@workers_option
@seed_option
@click.option('--ablation', is_flag=True, help='Also tune the transfer variant for each configured source size.')
def pretrain_cmd(config_path, out_dir, workers, seed, ablation):
    """Pretrain the transfer autoencoder on simulated source data."""
    with reported_errors(config_path):
        cfg, raw = ExperimentService.load_config(config_path)
        cfg = ExperimentService.with_seed(cfg, seed)
        outputs = ExperimentService.pretrain(cfg, raw, output_dir(out_dir), ablation=ablation,
                                             workers=worker_count(workers))
        for path in outputs:
            click.echo(path)
