#! IMPORTS


import sys
from .cli import main


#! MAIN


if __name__ == "__main__":
    sys.exit(main())
