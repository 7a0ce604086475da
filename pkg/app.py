import click

from commands.diagnose import diagnose_cmd
from commands.pretrain import pretrain_cmd
from commands.run import run_cmd
from commands.simulate import simulate_cmd
from commands.sweep import sweep_cmd
from config import Config


def create_cli():
    """Create the command group and register every subcommand."""

    @click.group()
    @click.option('--log-level', default=None, help='Override $CODSA_LOG_LEVEL.')
    def cli(log_level):
        """Conditional data synthesis augmentation experiments."""
        Config.validate()
        Config.setup_logging(log_level)

    cli.add_command(simulate_cmd)
    cli.add_command(pretrain_cmd)
    cli.add_command(run_cmd)
    cli.add_command(sweep_cmd)
    cli.add_command(diagnose_cmd)
    return cli


cli = create_cli()

if __name__ == '__main__':
    cli()
