import sys

from epirk.main import main

sys.exit(main())
