import sys

from covroute.cli import main

sys.exit(main())
