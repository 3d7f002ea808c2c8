import sys
from pathlib import Path

# test modules import shared helpers from each other (tests/ is a plain dir)
sys.path.insert(0, str(Path(__file__).parent))
