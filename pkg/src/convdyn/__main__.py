"""Allow ``python -m convdyn`` as an alias for the ``convdyn`` script."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
