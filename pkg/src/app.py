"""Main application entry point: `python -m src.app <command> ...`"""
import sys

from src.cli import main

if __name__ == "__main__":
    sys.exit(main())
