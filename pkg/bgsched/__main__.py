import sys

from bgsched.cli import main

sys.exit(main())
