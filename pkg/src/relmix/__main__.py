import sys

from .expharness.cli import main

sys.exit(main())
