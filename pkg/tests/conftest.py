import pathlib
import sys

# Make test-local helper modules (the independent oracles) importable.
sys.path.insert(0, str(pathlib.Path(__file__).parent))
