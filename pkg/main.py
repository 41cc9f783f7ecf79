"""Main entry point for the lifelong editing pipeline."""

from src.cli import main

if __name__ == "__main__":
    main()
