import sys

from sar_despeckler.cli import main

sys.exit(main())
