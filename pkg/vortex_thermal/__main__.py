import sys

from vortex_thermal.cli import main

sys.exit(main())
