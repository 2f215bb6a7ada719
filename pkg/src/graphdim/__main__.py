import sys

from graphdim.cli import main

sys.exit(main())
