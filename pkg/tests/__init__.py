"""
GPCM Toolkit Test Suite
See docs/TESTING.md
"""
