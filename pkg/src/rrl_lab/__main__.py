import sys

from rrl_lab.harness.cli import main

sys.exit(main())
