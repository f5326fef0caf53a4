import os
import sys
import logging
from typing import List, Optional

from dotenv import load_dotenv

load_dotenv()

from patchforge.cli.commands import COMMANDS  # noqa: E402
from patchforge.cli.config import resolve_config  # noqa: E402
from patchforge.cli.parser import build_parser  # noqa: E402
from patchforge.core.errors import RUNTIME_EXIT_CODE, PatchForgeError  # noqa: E402
from patchforge.core.runtime import configure_determinism  # noqa: E402

logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv("PATCHFORGE_LOG_LEVEL", "INFO")
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse, resolve config, dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(args.verbose)
    try:
        config = resolve_config(args, args.command)
        configure_determinism()
        logger.info(f"patchforge {args.command} (seed {config.seed})")
        return COMMANDS[args.command](args, config)
    except PatchForgeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return RUNTIME_EXIT_CODE
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=True)
        return RUNTIME_EXIT_CODE


if __name__ == "__main__":
    sys.exit(run())
