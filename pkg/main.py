import sys

from dotenv import load_dotenv

from mechsearch.cli import configure_logging, main

load_dotenv()
configure_logging()

if __name__ == "__main__":
    sys.exit(main())
