"""Entry point for ``python -m fstrn.cli``."""

from .main import main

if __name__ == '__main__':
    main()
