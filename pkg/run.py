#!/usr/bin/env python3
"""
Startup script for the Aluthge toolkit command line
"""

import sys
from pathlib import Path

# Add the project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))


def check_requirements() -> bool:
    """Check that the numerical stack is importable"""
    missing = []
    for module in ("numpy", "scipy", "pydantic", "dotenv", "sqlalchemy"):
        try:
            __import__(module)
        except ImportError:
            missing.append(module)

    if missing:
        print(f"Missing dependencies: {', '.join(missing)}", file=sys.stderr)
        print("Please run: pip install -r requirements.txt", file=sys.stderr)
        return False
    return True


def main() -> int:
    """Main entry point"""
    if not check_requirements():
        return 2

    # config loads .env on import
    from app.main import main as cli_main
    return cli_main(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
