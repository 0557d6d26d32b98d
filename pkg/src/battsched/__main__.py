import sys

from battsched.cli import main

sys.exit(main())
