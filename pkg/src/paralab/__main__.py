import sys

from paralab.cli import main

sys.exit(main())
