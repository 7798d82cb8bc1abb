import sys

from classim.cli import main

sys.exit(main())
