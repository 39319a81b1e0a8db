import sys

from legalkg.cli import main

sys.exit(main())
