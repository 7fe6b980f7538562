import sys

from bvscal.cli import main

sys.exit(main())
