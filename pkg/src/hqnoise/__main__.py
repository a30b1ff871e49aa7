import sys

from hqnoise.cli import main

sys.exit(main())
