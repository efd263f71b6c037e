"""Allow ``python -m localsgd_lab``."""

import sys

from .cli import main

sys.exit(main())
