import sys

from govimpact.cli import main

sys.exit(main())
