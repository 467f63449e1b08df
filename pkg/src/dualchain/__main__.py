import sys

from dualchain.cli import main

sys.exit(main())
