import sys
from pathlib import Path

# Test-only helper modules (strategies, shared property bodies, oracles) live
# next to the tests rather than inside the installed package.
sys.path.insert(0, str(Path(__file__).parent))
