"""
Entry-point script for the closed-loop adiabatic dynamics harness.
This script configures logging and hands the command line to the dispatcher, which loads a scenario,
runs or validates it, and writes the CSV series and run report.
"""

import sys

from src.cli.dispatch import dispatch
from src.common.config import LOG_FILE, LOG_LEVEL
from src.common.logs import configure_logging


def main():
    """
    Main execution function for the harness.
    """
    configure_logging(LOG_LEVEL, LOG_FILE)
    return dispatch(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
