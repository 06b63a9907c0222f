import sys

from rmtportfolio.cli import main

sys.exit(main())
