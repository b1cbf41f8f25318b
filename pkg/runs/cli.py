"""
`infralab <command> [--config FILE] [--workers N]` front end over the management
commands. Hyphenated command names map to the underscored command modules.
"""

import os
import sys

from .config import COMMANDS

USAGE = "usage: infralab {" + ",".join(name.replace("_", "-") for name in COMMANDS) + "} [--config FILE] [--workers N]"


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(USAGE)
        return 0 if argv else 2
    command = argv[0].replace("-", "_")
    if command not in COMMANDS:
        print(f"Unknown command {argv[0]!r}.\n{USAGE}", file=sys.stderr)
        return 2

    os.environ.setdefault("DJANGO_SETTINGS_MODULE", "infralab.settings")
    from django.core.management import execute_from_command_line

    try:
        execute_from_command_line(["infralab", command, *argv[1:]])
    except SystemExit as exc:
        if exc.code is None:
            return 0
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
