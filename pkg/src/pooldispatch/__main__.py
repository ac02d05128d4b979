"""Allow `python -m pooldispatch ...` as an alias for the console script."""

import sys

from pooldispatch.cli import main

if __name__ == "__main__":
    sys.exit(main())
