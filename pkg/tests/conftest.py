import sys
from pathlib import Path

# make tests/invariants.py importable from any test module
sys.path.insert(0, str(Path(__file__).parent))
