import sys

from dfgprint.cli import main

sys.exit(main())
