import sys

from levyspline.cli import main

sys.exit(main())
