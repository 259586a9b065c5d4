import sys

from floodlens.cli import main

sys.exit(main())
