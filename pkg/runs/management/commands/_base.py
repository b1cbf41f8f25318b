import logging

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from lab.fockspace import TruncationError
from lab.hamiltonian import ResourceLimitError, SolverConvergenceError
from lab.kernels import KernelDivergenceError, ParameterDomainError
from lab.representation import InsufficientDataError
from runs import pipelines
from runs.artifacts import ArtifactMeta, write_csv, write_json
from runs.config import ConfigError, load_config

logger = logging.getLogger(__name__)

EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_DIVERGENCE = 4

INPUT_ERRORS = (ConfigError, ParameterDomainError, InsufficientDataError, ResourceLimitError, TruncationError)


def exit_code_for(exc: Exception) -> int | None:
    if isinstance(exc, KernelDivergenceError):
        return EXIT_DIVERGENCE
    if isinstance(exc, SolverConvergenceError):
        return EXIT_SOLVER
    if isinstance(exc, INPUT_ERRORS):
        return EXIT_INPUT
    return None


class LabCommand(BaseCommand):
    """
    Shared driver: read and validate the config, run the named pipeline, write the
    artifacts and print a short summary. Lab errors become CommandError exit codes.
    """

    pipeline = ""

    def add_arguments(self, parser):
        parser.add_argument("--config", help="INI run configuration; every key falls back to its default.")
        parser.add_argument(
            "--workers",
            type=int,
            default=settings.LAB_WORKERS,
            help="Worker processes for independent parameter points (default: INFRALAB_WORKERS).",
        )

    def handle(self, *args, **options):
        try:
            config = load_config(options["config"], self.command_name)
            result = getattr(pipelines, self.pipeline)(config, workers=max(1, options["workers"]))
            written = self.write_outputs(config, result)
        except Exception as exc:
            code = exit_code_for(exc)
            if code is None:
                raise
            key = getattr(exc, "key", None) or getattr(exc, "config_key", None)
            message = str(exc) if isinstance(exc, ConfigError) or not key else f"{key}: {exc}"
            logger.debug("%s failed with exit code %s", self.command_name, code)
            raise CommandError(message, returncode=code) from exc

        for line in result.summary:
            self.stdout.write(line)
        for path in written:
            self.stdout.write(self.style.SUCCESS(f"Wrote {path}"))

    @property
    def command_name(self) -> str:
        return self.__module__.rsplit(".", 1)[-1]

    def write_outputs(self, config, result) -> list:
        meta = ArtifactMeta.for_config(config)
        written = []
        if result.columns:
            written.append(write_csv(config.directory / f"{config.stem}.csv", meta, result.columns, result.rows))
        for suffix, payload in result.documents.items():
            name = f"{config.stem}_{suffix}.json" if suffix else f"{config.stem}.json"
            written.append(write_json(config.directory / name, meta, payload))
        return written
