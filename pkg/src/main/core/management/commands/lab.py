"""``python manage.py lab [command] --config run.json``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. On
failure the message is one line of JSON ``{"error": kind, "detail": text}``.
"""

import json
import logging

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ShrinkageLabError
from core.export import FORMATS
from core.models import COMMANDS, RunSpec, load_document
from core.runner import run

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = (
        "Compute limiting risks, errors and optimal shrinkers, or run Monte Carlo "
        "checks, from a JSON run configuration. Commands: " + ", ".join(COMMANDS) + "."
    )

    def add_arguments(self, parser):
        parser.add_argument("subcommand", nargs="?", choices=COMMANDS, help="overrides the config's command")
        parser.add_argument("--config", help="path of the JSON run configuration")
        parser.add_argument("--output", help="artifact path; the sidecar goes to <output>.run.json")
        parser.add_argument("--format", choices=FORMATS, dest="artifact_format")
        parser.add_argument("--seed", type=int, help="seed of the simulated replicates")
        parser.add_argument("--threads", type=int, help="worker threads (default SHRINKAGE_LAB_THREADS)")

    def _fail(self, exc: ShrinkageLabError):
        return CommandError(json.dumps(exc.to_payload()), returncode=exc.exit_code)

    def _usage(self):
        self.stdout.write(self.create_parser("manage.py", "lab").format_help())
        return CommandError(json.dumps({"error": "config", "detail": "no run configuration given"}), returncode=2)

    def handle(self, *args, **options):
        try:
            document = load_document(options["config"]) if options["config"] else {}
        except ShrinkageLabError as exc:
            raise self._fail(exc) from exc
        if not document and not options["subcommand"]:
            raise self._usage()
        overrides = {
            "command": options["subcommand"],
            "output": options["output"],
            "format": options["artifact_format"],
            "seed": options["seed"],
            "threads": options["threads"],
        }
        try:
            path = run(RunSpec.from_payload(document, **overrides))
        except ShrinkageLabError as exc:
            logger.error("%s failed: %s", options["subcommand"] or "run", exc)
            raise self._fail(exc) from exc
        self.stdout.write(str(path))
