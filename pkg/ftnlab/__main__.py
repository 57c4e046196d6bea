import sys

from ftnlab.cli import main


sys.exit(main())
