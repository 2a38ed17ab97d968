from __future__ import annotations

import sys

from ganlab.cli import run
from ganlab.config import load_config
from ganlab.logging import configure_logging


def main() -> None:
    config = load_config()
    configure_logging(config)
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
