import sys

from holograph.cli import main

sys.exit(main())
