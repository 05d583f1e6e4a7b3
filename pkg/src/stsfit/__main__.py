import sys

from stsfit.cli import main

sys.exit(main())
