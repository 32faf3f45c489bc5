"""Command-line entry point for the feature exporter."""

import sys

import click

from .export import DEFAULT_MODEL, ExportError, ExportJob, run_export


@click.group()
def cli():
    """Sentence-embedding feature export for JSONL corpora."""


@cli.command("export")
@click.option("--in", "input_path", required=True,
              type=click.Path(exists=True), help="input JSONL corpus")
@click.option("--out", "output_path", required=True, type=click.Path(),
              help="output JSONL corpus with features added")
@click.option("--model", "model_id", default=DEFAULT_MODEL, show_default=True,
              help="encoder checkpoint id ('debug-hash' for the offline stub)")
@click.option("--batch", "batch_size", type=int, default=64, show_default=True)
@click.option("--revision", default=None,
              help="pin an exact checkpoint revision")
def export_cmd(input_path, output_path, model_id, batch_size, revision):
    """Encode every text line and write the corpus back with features."""
    job = ExportJob(input_path=input_path, output_path=output_path,
                    model_id=model_id, batch_size=batch_size,
                    revision=revision)
    summary = run_export(job)
    click.echo(f"wrote {summary['lines']} lines to {output_path} "
               f"({summary['dim']}-dim, {summary['empty_texts']} empty texts)")


def main():
    try:
        cli(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(2)
    except click.UsageError as err:
        err.show()
        sys.exit(2)
    except click.ClickException as err:
        err.show()
        sys.exit(1)
    except ExportError as err:
        click.echo(f"export error: {err}", err=True)
        sys.exit(1)
    except Exception as err:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {err}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
