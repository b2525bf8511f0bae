import sys

from artigen.main import main

sys.exit(main())
