#!/usr/bin/env python3
"""
Kernel survival SVM - command-line entry point
Run this file with a subcommand, e.g. `python run.py train --data train.csv --out-model model.json`
"""

import logging
import sys


def check_dependencies():
    """Check if required packages are installed"""
    required_packages = ['numpy', 'numba', 'pandas', 'scipy', 'dotenv', 'flask', 'flask_cors', 'werkzeug']

    missing = []
    for package in required_packages:
        try:
            __import__(package)
        except ImportError:
            missing.append(package)

    if missing:
        print("❌ Missing required packages:", file=sys.stderr)
        for pkg in missing:
            print(f"   - {pkg}", file=sys.stderr)
        print("\n💡 Install missing packages with:", file=sys.stderr)
        print("   pip install -r requirements.txt", file=sys.stderr)
        return False
    return True


def setup_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


def main():
    if not check_dependencies():
        sys.exit(1)

    from config import Config

    setup_logging(Config.LOG_LEVEL)

    from cli import main as cli_main

    sys.exit(cli_main())


if __name__ == '__main__':
    main()
