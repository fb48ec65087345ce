#!/usr/bin/env python3
"""
Residual-life analysis launcher

Checks that the scientific stack is importable, offers to install it from
requirements.txt, then hands the command line to resqrl_cli.
"""

import importlib
import os
import subprocess
import sys

REQUIRED_MODULES = ("numpy", "scipy", "pandas", "yaml")


def check_dependencies():
    """Return the required modules that cannot be imported."""
    missing = []
    for name in REQUIRED_MODULES:
        try:
            importlib.import_module(name)
        except ImportError:
            missing.append(name)
    return missing


def install_dependencies():
    """Install missing dependencies using pip."""
    requirements = os.path.join(os.path.dirname(os.path.abspath(__file__)), "requirements.txt")
    try:
        subprocess.check_call([sys.executable, "-m", "pip", "install", "-r", requirements])
        return True
    except subprocess.CalledProcessError:
        return False


def main(argv=None):
    """Main launcher function."""
    missing = check_dependencies()
    if missing:
        print(f"Missing dependencies: {', '.join(missing)}. Attempting to install them...")
        if not install_dependencies():
            print("Failed to install dependencies. Please install them manually.")
            print("Run: pip install -r requirements.txt")
            return 1

    from resqrl_cli import main as cli_main
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
