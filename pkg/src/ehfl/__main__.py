import sys

from ehfl.cli import main

sys.exit(main())
