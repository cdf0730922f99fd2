"""
SA-Net - spectral analysis deep clustering of images.

Usage:
    python app.py run --config configs/two_rings.json --out report.json
    python app.py metrics --true truth.txt --pred pred.txt
"""
import sys
import os

# Add the src directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from ui.cli import cli_main


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
