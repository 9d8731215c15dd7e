import sys

from cv2xsim.cli import main

sys.exit(main())
